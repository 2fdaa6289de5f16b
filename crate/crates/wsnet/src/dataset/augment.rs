//! Line image augmentation: color jitter, noise, blur, geometric transforms
//! and random noise-patch masking.

use image::GrayImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchMask {
    pub enabled: bool,
    pub max_patches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Max absolute brightness shift in gray levels.
    pub brightness: f32,
    /// Max relative contrast change (0.2 means factor in [0.8, 1.2]).
    pub contrast: f32,
    /// Max additive uniform noise amplitude in gray levels.
    pub noise: f32,
    /// Max box-blur radius in pixels (sampled fractionally).
    pub blur: f32,
    /// Max extra shear in degrees.
    pub slant: f32,
    /// Max relative width scaling (0.1 means factor in [0.9, 1.1]).
    pub scale: f32,
    /// Max vertical shift in pixels.
    pub shift: f32,
    pub patch_mask: PatchMask,
}

impl AugmentationConfig {
    pub fn none() -> Self {
        AugmentationConfig {
            brightness: 0.0,
            contrast: 0.0,
            noise: 0.0,
            blur: 0.0,
            slant: 0.0,
            scale: 0.0,
            shift: 0.0,
            patch_mask: PatchMask {
                enabled: false,
                max_patches: 0,
            },
        }
    }

    pub fn desk_default() -> Self {
        AugmentationConfig {
            brightness: 24.0,
            contrast: 0.25,
            noise: 14.0,
            blur: 0.8,
            slant: 4.0,
            scale: 0.08,
            shift: 1.5,
            patch_mask: PatchMask {
                enabled: true,
                max_patches: 2,
            },
        }
    }

    /// Variant for encoder pre-training: strengths multiplied, patch masking
    /// off.
    pub fn scaled_no_patches(&self, mult: f32) -> Self {
        AugmentationConfig {
            brightness: self.brightness * mult,
            contrast: self.contrast * mult,
            noise: self.noise * mult,
            blur: self.blur * mult,
            slant: self.slant * mult,
            scale: self.scale * mult,
            shift: self.shift * mult,
            patch_mask: PatchMask {
                enabled: false,
                max_patches: 0,
            },
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("noise", self.noise),
            ("blur", self.blur),
            ("slant", self.slant),
            ("scale", self.scale),
            ("shift", self.shift),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(crate::error::Error::Config(format!(
                    "augmentation range {name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        *self == Self::none()
            || (self.brightness == 0.0
                && self.contrast == 0.0
                && self.noise == 0.0
                && self.blur == 0.0
                && self.slant == 0.0
                && self.scale == 0.0
                && self.shift == 0.0
                && !self.patch_mask.enabled)
    }
}

fn sample_at(img: &GrayImage, x: f32, y: f32) -> f32 {
    let (w, h) = img.dimensions();
    if x < -0.5 || y < -0.5 || x > w as f32 - 0.5 || y > h as f32 - 0.5 {
        return 255.0;
    }
    let x0 = x.floor().clamp(0.0, w as f32 - 1.0) as u32;
    let y0 = y.floor().clamp(0.0, h as f32 - 1.0) as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (x - x0 as f32).clamp(0.0, 1.0);
    let fy = (y - y0 as f32).clamp(0.0, 1.0);
    let p = |xx: u32, yy: u32| img.get_pixel(xx, yy).0[0] as f32;
    p(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + p(x1, y0) * fx * (1.0 - fy)
        + p(x0, y1) * (1.0 - fx) * fy
        + p(x1, y1) * fx * fy
}

/// Applies the configured augmentations. Height is preserved; width may
/// change under scaling. All-zero ranges with masking disabled return the
/// input unchanged.
pub fn augment(img: &GrayImage, cfg: &AugmentationConfig, rng: &mut impl Rng) -> GrayImage {
    if cfg.is_identity() {
        return img.clone();
    }
    let (w, h) = img.dimensions();

    // geometric: width scale + shear + vertical shift, inverse-mapped
    let scale = if cfg.scale > 0.0 {
        1.0 + rng.random_range(-cfg.scale..cfg.scale)
    } else {
        1.0
    };
    let shear = if cfg.slant > 0.0 {
        rng.random_range(-cfg.slant..cfg.slant).to_radians().tan()
    } else {
        0.0
    };
    let shift = if cfg.shift > 0.0 {
        rng.random_range(-cfg.shift..cfg.shift)
    } else {
        0.0
    };
    let new_w = ((w as f32 * scale + shear.abs() * h as f32).round() as u32).max(1);
    let mut out = GrayImage::from_pixel(new_w, h, image::Luma([255u8]));
    for y in 0..h {
        for x in 0..new_w {
            // invert: source x accounts for scale and shear about the bottom
            let sx = (x as f32 - (h - 1 - y) as f32 * shear) / scale;
            let sy = y as f32 - shift;
            let v = sample_at(img, sx, sy);
            out.put_pixel(x, y, image::Luma([v.round().clamp(0.0, 255.0) as u8]));
        }
    }

    // color jitter
    let bright = if cfg.brightness > 0.0 {
        rng.random_range(-cfg.brightness..cfg.brightness)
    } else {
        0.0
    };
    let contrast = if cfg.contrast > 0.0 {
        1.0 + rng.random_range(-cfg.contrast..cfg.contrast)
    } else {
        1.0
    };
    for p in out.pixels_mut() {
        let v = (p.0[0] as f32 - 128.0) * contrast + 128.0 + bright;
        p.0[0] = v.round().clamp(0.0, 255.0) as u8;
    }

    // additive noise
    if cfg.noise > 0.0 {
        for p in out.pixels_mut() {
            let v = p.0[0] as f32 + rng.random_range(-cfg.noise..cfg.noise);
            p.0[0] = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    // box blur with a random fractional radius
    if cfg.blur > 0.0 {
        let radius = rng.random_range(0.0..cfg.blur);
        let r = radius.round() as i32;
        if r > 0 {
            let src = out.clone();
            let (ow, oh) = src.dimensions();
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0f32;
                    let mut cnt = 0.0f32;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let xx = x as i32 + dx;
                            let yy = y as i32 + dy;
                            if xx >= 0 && yy >= 0 && (xx as u32) < ow && (yy as u32) < oh {
                                acc += src.get_pixel(xx as u32, yy as u32).0[0] as f32;
                                cnt += 1.0;
                            }
                        }
                    }
                    out.put_pixel(x, y, image::Luma([(acc / cnt).round() as u8]));
                }
            }
        }
    }

    // noise patches: full height, width uniform in [1, H] (at most a square)
    if cfg.patch_mask.enabled && cfg.patch_mask.max_patches > 0 {
        let n = rng.random_range(0..=cfg.patch_mask.max_patches);
        let (ow, oh) = out.dimensions();
        for _ in 0..n {
            let pw = rng.random_range(1..=oh).min(ow);
            let x0 = rng.random_range(0..=ow.saturating_sub(pw));
            for y in 0..oh {
                for x in x0..x0 + pw {
                    out.put_pixel(x, y, image::Luma([rng.random_range(0..=255u8)]));
                }
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::render::render_line;
    use crate::dataset::style::generate_writer_style;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_image() -> GrayImage {
        render_line(&generate_writer_style(3), "sample", 64).unwrap()
    }

    #[test]
    fn all_zero_config_is_identity() {
        let img = test_image();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment(&img, &AugmentationConfig::none(), &mut rng);
        assert_eq!(out.as_raw(), img.as_raw());
    }

    #[test]
    fn height_is_preserved() {
        let img = test_image();
        let cfg = AugmentationConfig::desk_default();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment(&img, &cfg, &mut rng);
            assert_eq!(out.height(), img.height());
            assert!(out.width() >= 1);
        }
    }

    #[test]
    fn patch_widths_bounded_by_height() {
        // patch pixels differ from a patch-free augmentation of the same rng
        // stream only inside [1, H]-wide full-height bands; verify the bound
        // by construction: sample many patch widths through the public api
        let img = test_image();
        let h = img.height();
        let mut cfg = AugmentationConfig::none();
        cfg.patch_mask = PatchMask {
            enabled: true,
            max_patches: 1,
        };
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment(&img, &cfg, &mut rng);
            // columns fully overwritten by a patch differ from the source;
            // count contiguous differing full-height columns
            let mut patched_cols = 0u32;
            for x in 0..out.width() {
                let mut differs = 0;
                for y in 0..h {
                    if out.get_pixel(x, y) != img.get_pixel(x, y) {
                        differs += 1;
                    }
                }
                if differs > (h * 3) / 4 {
                    patched_cols += 1;
                }
            }
            assert!(patched_cols <= h, "patch wider than height: {patched_cols}");
        }
    }

    #[test]
    fn patch_count_spans_zero_to_max() {
        let img = test_image();
        let mut cfg = AugmentationConfig::none();
        cfg.patch_mask = PatchMask {
            enabled: true,
            max_patches: 3,
        };
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // count patches via the rng stream the implementation uses
            let n = rng.random_range(0..=cfg.patch_mask.max_patches);
            seen.insert(n);
            let _ = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        }
        assert_eq!(seen, (0..=3).collect());
    }

    #[test]
    fn determinism_given_same_rng_seed() {
        let img = test_image();
        let cfg = AugmentationConfig::desk_default();
        let a = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn encoder_variant_disables_patches() {
        let cfg = AugmentationConfig::desk_default().scaled_no_patches(1.5);
        assert!(!cfg.patch_mask.enabled);
        assert!(cfg.noise > AugmentationConfig::desk_default().noise);
    }

    #[test]
    fn negative_ranges_rejected() {
        let mut cfg = AugmentationConfig::none();
        cfg.noise = -1.0;
        assert!(cfg.validate().is_err());
    }
}
