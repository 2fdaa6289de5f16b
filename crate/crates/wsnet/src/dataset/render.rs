//! Rasterization of text lines under a writer style.

use super::glyphs::glyph;
use super::style::WriterStyleParams;
use crate::error::{Error, Result};
use image::GrayImage;

/// Scale from em units to pixels, relative to the line height.
fn em_scale(height: usize) -> f32 {
    0.52 * height as f32
}

struct Segment {
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
}

/// Renders `text` at the given pixel height. Glyph shapes, deformations,
/// slant and jitter are pure functions of the style, so the same call always
/// produces the same pixels. Out-of-inventory characters are an error.
pub fn render_line(style: &WriterStyleParams, text: &str, height: usize) -> Result<GrayImage> {
    if text.is_empty() {
        return Err(Error::Invalid("cannot render empty text".into()));
    }
    if height < 8 {
        return Err(Error::Invalid(format!("height {height} too small")));
    }
    let em = em_scale(height);
    let top = 0.12 * height as f32;
    let band = 0.76 * height as f32; // em y in [0,1] maps onto this band
    let slant_tan = style.slant.to_radians().tan();

    // Lay glyph strokes out as line segments in pixel space.
    let mut segments: Vec<Segment> = Vec::new();
    let mut cursor = style.stroke_width + 2.0 + slant_tan.abs() * band;
    for (index, c) in text.chars().enumerate() {
        let resolved = style.resolve_glyph(c);
        let g = glyph(resolved).ok_or(Error::OutOfCharset(c))?;
        let dy_line = style.jitter(index);
        for (si, stroke) in g.strokes.iter().enumerate() {
            let mut prev: Option<(f32, f32)> = None;
            for (pi, &(gx, gy)) in stroke.iter().enumerate() {
                let (dx, dy) = style.deform(resolved, si, pi);
                let ex = gx + dx;
                let ey = (gy + dy).clamp(-0.05, 1.1);
                // shear about the baseline: tops shift by slant
                let px = cursor + ex * em + (1.0 - ey) * band * slant_tan;
                let py = top + ey * band + dy_line;
                if let Some((qx, qy)) = prev {
                    segments.push(Segment {
                        x0: qx,
                        y0: qy,
                        x1: px,
                        y1: py,
                    });
                }
                prev = Some((px, py));
            }
            // dots (single-point strokes) still mark ink
            if stroke.len() == 1 {
                if let Some((qx, qy)) = prev {
                    segments.push(Segment {
                        x0: qx,
                        y0: qy,
                        x1: qx,
                        y1: qy,
                    });
                }
            }
        }
        cursor += g.width * em + style.glyph_spacing;
    }

    let width = (cursor + style.stroke_width + 2.0 + slant_tan.abs() * band).ceil() as usize;
    let width = width.max(1);
    let mut img = GrayImage::from_pixel(width as u32, height as u32, image::Luma([255u8]));

    // Coverage-based thick line drawing; darkest ink wins per pixel.
    let half = style.stroke_width * 0.5;
    for seg in &segments {
        let x_lo = (seg.x0.min(seg.x1) - half - 1.0).floor().max(0.0) as usize;
        let x_hi = (seg.x0.max(seg.x1) + half + 1.0).ceil().min(width as f32 - 1.0) as usize;
        let y_lo = (seg.y0.min(seg.y1) - half - 1.0).floor().max(0.0) as usize;
        let y_hi = (seg.y0.max(seg.y1) + half + 1.0)
            .ceil()
            .min(height as f32 - 1.0) as usize;
        let vx = seg.x1 - seg.x0;
        let vy = seg.y1 - seg.y0;
        let len2 = vx * vx + vy * vy;
        for py in y_lo..=y_hi {
            for px in x_lo..=x_hi {
                let cx = px as f32 + 0.5;
                let cy = py as f32 + 0.5;
                let t = if len2 > 1e-12 {
                    (((cx - seg.x0) * vx + (cy - seg.y0) * vy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let dx = cx - (seg.x0 + t * vx);
                let dy = cy - (seg.y0 + t * vy);
                let dist = (dx * dx + dy * dy).sqrt();
                let coverage = (half + 0.5 - dist).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    let val = (255.0 * (1.0 - coverage)) as u8;
                    let p = img.get_pixel_mut(px as u32, py as u32);
                    if val < p.0[0] {
                        p.0[0] = val;
                    }
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::style::{generate_writer_style, AmbiguityChoice};

    #[test]
    fn contract_height_and_width() {
        let style = generate_writer_style(42);
        let img = render_line(&style, "ab", 64).unwrap();
        assert_eq!(img.height(), 64);
        assert!(img.width() > 0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let style = generate_writer_style(9);
        let a = render_line(&style, "hello", 32).unwrap();
        let b = render_line(&style, "hello", 32).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn merged_pair_members_render_pixel_identical() {
        let mut style = generate_writer_style(5);
        style
            .ambiguity_profile
            .insert(('o', '0'), AmbiguityChoice::MergedFirst);
        let a = render_line(&style, "o", 32).unwrap();
        let b = render_line(&style, "0", 32).unwrap();
        assert_eq!(a.dimensions(), b.dimensions());
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn swapped_pair_members_exchange_shapes() {
        let mut style = generate_writer_style(5);
        style
            .ambiguity_profile
            .insert(('l', '1'), AmbiguityChoice::Distinct);
        let l_distinct = render_line(&style, "l", 32).unwrap();
        let one_distinct = render_line(&style, "1", 32).unwrap();
        style
            .ambiguity_profile
            .insert(('l', '1'), AmbiguityChoice::Swapped);
        let l_swapped = render_line(&style, "l", 32).unwrap();
        let one_swapped = render_line(&style, "1", 32).unwrap();
        assert_eq!(l_swapped.as_raw(), one_distinct.as_raw());
        assert_eq!(one_swapped.as_raw(), l_distinct.as_raw());
    }

    #[test]
    fn out_of_charset_is_an_error() {
        let style = generate_writer_style(1);
        assert!(matches!(
            render_line(&style, "a#b", 32),
            Err(crate::error::Error::OutOfCharset('#'))
        ));
        assert!(render_line(&style, "", 32).is_err());
    }

    #[test]
    fn different_styles_draw_different_pixels() {
        let a = render_line(&generate_writer_style(100), "wordy", 32).unwrap();
        let b = render_line(&generate_writer_style(101), "wordy", 32).unwrap();
        assert!(a.dimensions() != b.dimensions() || a.as_raw() != b.as_raw());
    }

    #[test]
    fn images_contain_ink() {
        let style = generate_writer_style(12);
        let img = render_line(&style, "ink", 32).unwrap();
        let dark = img.pixels().filter(|p| p.0[0] < 128).count();
        assert!(dark > 20, "only {dark} dark pixels");
    }
}
