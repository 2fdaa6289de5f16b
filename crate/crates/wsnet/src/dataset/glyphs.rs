//! Skeleton letterforms for the synthetic renderer.
//!
//! Every glyph is a set of polyline strokes inside a unit em box: x grows to
//! the right from 0 to the glyph's advance width, y runs from 0 (ascender
//! top) to 1 (baseline). The x-height band is roughly y in [0.35, 1].

pub struct Glyph {
    /// Advance width in em units.
    pub width: f32,
    pub strokes: Vec<Vec<(f32, f32)>>,
}

fn line(x0: f32, y0: f32, x1: f32, y1: f32) -> Vec<(f32, f32)> {
    vec![(x0, y0), (x1, y1)]
}

fn poly(pts: &[(f32, f32)]) -> Vec<(f32, f32)> {
    pts.to_vec()
}

/// Closed circle approximated by a 12-gon.
fn circle(cx: f32, cy: f32, r: f32) -> Vec<(f32, f32)> {
    arc(cx, cy, r, r, 0.0, 360.0, 12)
}

/// Elliptic arc from a0 to a1 degrees (0 = +x axis, counterclockwise in a
/// y-down frame this traces clockwise visually; only consistency matters).
fn arc(cx: f32, cy: f32, rx: f32, ry: f32, a0: f32, a1: f32, n: usize) -> Vec<(f32, f32)> {
    (0..=n)
        .map(|i| {
            let a = (a0 + (a1 - a0) * i as f32 / n as f32).to_radians();
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Canonical skeleton for one character, or None for whitespace.
pub fn glyph(c: char) -> Option<Glyph> {
    let xh = 0.35; // x-height top
    let mid = 0.675; // x-height middle
    let g = match c {
        ' ' => Glyph {
            width: 0.55,
            strokes: vec![],
        },
        'a' => Glyph {
            width: 0.62,
            strokes: vec![circle(0.28, mid, 0.25), line(0.53, xh + 0.05, 0.53, 1.0)],
        },
        'b' => Glyph {
            width: 0.62,
            strokes: vec![line(0.08, 0.02, 0.08, 1.0), circle(0.32, mid, 0.24)],
        },
        'c' => Glyph {
            width: 0.58,
            strokes: vec![arc(0.32, mid, 0.26, 0.3, 45.0, 315.0, 10)],
        },
        'd' => Glyph {
            width: 0.62,
            strokes: vec![line(0.56, 0.02, 0.56, 1.0), circle(0.32, mid, 0.24)],
        },
        'e' => Glyph {
            width: 0.60,
            strokes: vec![
                line(0.06, 0.62, 0.56, 0.62),
                arc(0.31, mid, 0.26, 0.3, 15.0, 330.0, 10),
            ],
        },
        'f' => Glyph {
            width: 0.50,
            strokes: vec![
                poly(&[(0.46, 0.08), (0.34, 0.02), (0.24, 0.12), (0.24, 1.0)]),
                line(0.06, 0.40, 0.44, 0.40),
            ],
        },
        'g' => Glyph {
            width: 0.62,
            strokes: vec![
                circle(0.30, 0.62, 0.22),
                poly(&[(0.52, 0.40), (0.52, 0.88), (0.40, 1.0), (0.16, 0.97)]),
            ],
        },
        'h' => Glyph {
            width: 0.60,
            strokes: vec![
                line(0.08, 0.02, 0.08, 1.0),
                poly(&[(0.08, 0.55), (0.28, 0.37), (0.50, 0.50), (0.50, 1.0)]),
            ],
        },
        'i' => Glyph {
            width: 0.30,
            strokes: vec![line(0.15, 0.40, 0.15, 1.0), circle(0.15, 0.18, 0.035)],
        },
        'j' => Glyph {
            width: 0.36,
            strokes: vec![
                poly(&[(0.26, 0.40), (0.26, 0.88), (0.16, 1.0), (0.04, 0.94)]),
                circle(0.26, 0.18, 0.035),
            ],
        },
        'k' => Glyph {
            width: 0.58,
            strokes: vec![
                line(0.08, 0.02, 0.08, 1.0),
                poly(&[(0.48, 0.38), (0.08, 0.72), (0.50, 1.0)]),
            ],
        },
        'l' => Glyph {
            width: 0.30,
            strokes: vec![line(0.15, 0.02, 0.15, 1.0)],
        },
        'm' => Glyph {
            width: 0.92,
            strokes: vec![
                line(0.07, 0.38, 0.07, 1.0),
                poly(&[(0.07, 0.52), (0.24, 0.37), (0.42, 0.50), (0.42, 1.0)]),
                poly(&[(0.42, 0.52), (0.60, 0.37), (0.78, 0.50), (0.78, 1.0)]),
            ],
        },
        'n' => Glyph {
            width: 0.60,
            strokes: vec![
                line(0.08, 0.38, 0.08, 1.0),
                poly(&[(0.08, 0.52), (0.28, 0.37), (0.50, 0.50), (0.50, 1.0)]),
            ],
        },
        'o' => Glyph {
            width: 0.64,
            strokes: vec![circle(0.32, mid, 0.26)],
        },
        'p' => Glyph {
            width: 0.62,
            strokes: vec![line(0.08, 0.40, 0.08, 1.0), circle(0.33, 0.60, 0.23)],
        },
        'q' => Glyph {
            width: 0.62,
            strokes: vec![line(0.54, 0.40, 0.54, 1.0), circle(0.30, 0.60, 0.23)],
        },
        'r' => Glyph {
            width: 0.46,
            strokes: vec![
                line(0.08, 0.38, 0.08, 1.0),
                poly(&[(0.08, 0.56), (0.24, 0.38), (0.42, 0.44)]),
            ],
        },
        's' => Glyph {
            width: 0.54,
            strokes: vec![poly(&[
                (0.46, 0.42),
                (0.26, 0.36),
                (0.10, 0.48),
                (0.26, 0.64),
                (0.42, 0.78),
                (0.26, 0.98),
                (0.06, 0.92),
            ])],
        },
        't' => Glyph {
            width: 0.46,
            strokes: vec![
                poly(&[(0.22, 0.10), (0.22, 0.88), (0.34, 1.0), (0.44, 0.94)]),
                line(0.04, 0.40, 0.42, 0.40),
            ],
        },
        'u' => Glyph {
            width: 0.60,
            strokes: vec![
                poly(&[(0.08, 0.38), (0.08, 0.86), (0.22, 1.0), (0.50, 0.84)]),
                line(0.50, 0.38, 0.50, 1.0),
            ],
        },
        'v' => Glyph {
            width: 0.58,
            strokes: vec![poly(&[(0.06, 0.38), (0.29, 1.0), (0.52, 0.38)])],
        },
        'w' => Glyph {
            width: 0.88,
            strokes: vec![poly(&[
                (0.05, 0.38),
                (0.23, 1.0),
                (0.42, 0.50),
                (0.61, 1.0),
                (0.79, 0.38),
            ])],
        },
        'x' => Glyph {
            width: 0.56,
            strokes: vec![line(0.06, 0.38, 0.50, 1.0), line(0.50, 0.38, 0.06, 1.0)],
        },
        'y' => Glyph {
            width: 0.58,
            strokes: vec![
                poly(&[(0.06, 0.38), (0.28, 0.92)]),
                poly(&[(0.52, 0.38), (0.24, 1.0), (0.10, 1.0)]),
            ],
        },
        'z' => Glyph {
            width: 0.56,
            strokes: vec![poly(&[(0.08, 0.38), (0.48, 0.38), (0.08, 1.0), (0.48, 1.0)])],
        },
        // The three digit confusables. Canonical forms differ from their
        // letter partners (full-height oval vs x-height circle, flagged stem
        // vs bare stem, curved top vs flat top); writer styles may merge or
        // swap them.
        '0' => Glyph {
            width: 0.64,
            strokes: vec![arc(0.32, 0.51, 0.24, 0.47, 0.0, 360.0, 12)],
        },
        '1' => Glyph {
            width: 0.40,
            strokes: vec![line(0.24, 0.02, 0.24, 1.0), line(0.24, 0.02, 0.08, 0.20)],
        },
        '2' => Glyph {
            width: 0.56,
            strokes: vec![
                arc(0.28, 0.22, 0.20, 0.20, 160.0, 360.0, 8),
                poly(&[(0.48, 0.22), (0.08, 1.0), (0.50, 1.0)]),
            ],
        },
        _ => return None,
    };
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charset::Charset;

    #[test]
    fn every_desk_charset_char_has_a_glyph() {
        for &c in Charset::default_desk().chars() {
            let g = glyph(c).unwrap_or_else(|| panic!("missing glyph for {c:?}"));
            assert!(g.width > 0.0);
            if c != ' ' {
                assert!(!g.strokes.is_empty(), "{c:?} has no strokes");
            }
        }
    }

    #[test]
    fn glyph_points_stay_in_em_box() {
        for &c in Charset::default_desk().chars() {
            let g = glyph(c).unwrap();
            for stroke in &g.strokes {
                for &(x, y) in stroke {
                    assert!((-0.01..=1.01).contains(&y), "{c:?} y={y}");
                    assert!(x >= -0.01 && x <= g.width + 0.01, "{c:?} x={x}");
                }
            }
        }
    }
}
