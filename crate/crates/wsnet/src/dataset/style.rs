//! Writer style parameters: deterministic functions of a style seed.

use crate::charset::fnv1a64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Character pairs that writer styles may render ambiguously. Each pair is a
/// (letter, digit) confusable; digits are the "variant" symbols of the charset.
pub const AMBIGUITY_PAIRS: [(char, char); 3] = [('o', '0'), ('l', '1'), ('z', '2')];

/// How one writer renders the two members of an ambiguity pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityChoice {
    /// Each member keeps its canonical skeleton.
    Distinct,
    /// Members exchange skeletons; identity is needed to read them back.
    Swapped,
    /// Both members render with the first member's skeleton (pixel-identical).
    MergedFirst,
    /// Both members render with the second member's skeleton.
    MergedSecond,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WriterStyleParams {
    pub style_seed: u64,
    /// Shear angle in degrees; positive leans the tops to the right.
    pub slant: f32,
    /// Stroke thickness in pixels at the reference height.
    pub stroke_width: f32,
    /// Extra advance between glyphs in pixels.
    pub glyph_spacing: f32,
    /// Baseline wobble amplitude in pixels.
    pub baseline_jitter: f32,
    /// Amplitude of per-point skeleton deformation, in em units. The offsets
    /// themselves are hashed from (style_seed, glyph, point), so the whole
    /// deformation field is implied by this seed and amplitude.
    pub glyph_shape_offsets: f32,
    /// Per-pair rendering choice.
    pub ambiguity_profile: BTreeMap<(char, char), AmbiguityChoice>,
}

/// Deterministic style for a seed. Distinct seeds draw independent parameter
/// vectors, so two seeds agreeing on every field is vanishingly unlikely.
pub fn generate_writer_style(style_seed: u64) -> WriterStyleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(style_seed.wrapping_mul(0x2545f4914f6cdd1d) ^ 0x5851);
    let slant = rng.random_range(-16.0..16.0f32);
    let stroke_width = rng.random_range(1.2..2.8f32);
    let glyph_spacing = rng.random_range(0.5..3.0f32);
    let baseline_jitter = rng.random_range(0.0..1.2f32);
    let glyph_shape_offsets = rng.random_range(0.01..0.055f32);
    let mut ambiguity_profile = BTreeMap::new();
    for pair in AMBIGUITY_PAIRS {
        let u: f32 = rng.random_range(0.0..1.0);
        let choice = if u < 0.40 {
            AmbiguityChoice::Distinct
        } else if u < 0.70 {
            AmbiguityChoice::Swapped
        } else if u < 0.85 {
            AmbiguityChoice::MergedFirst
        } else {
            AmbiguityChoice::MergedSecond
        };
        ambiguity_profile.insert(pair, choice);
    }
    WriterStyleParams {
        style_seed,
        slant,
        stroke_width,
        glyph_spacing,
        baseline_jitter,
        glyph_shape_offsets,
        ambiguity_profile,
    }
}

impl WriterStyleParams {
    /// The character whose skeleton is drawn when this style renders `c`.
    pub fn resolve_glyph(&self, c: char) -> char {
        for (&(a, b), &choice) in &self.ambiguity_profile {
            if c != a && c != b {
                continue;
            }
            return match choice {
                AmbiguityChoice::Distinct => c,
                AmbiguityChoice::Swapped => {
                    if c == a {
                        b
                    } else {
                        a
                    }
                }
                AmbiguityChoice::MergedFirst => a,
                AmbiguityChoice::MergedSecond => b,
            };
        }
        c
    }

    /// Deterministic per-point deformation offset in em units.
    pub fn deform(&self, glyph: char, stroke: usize, point: usize) -> (f32, f32) {
        let key = (glyph as u64) << 32 | (stroke as u64) << 16 | point as u64;
        let h = fnv1a64(&(self.style_seed ^ key.wrapping_mul(0x9e3779b97f4a7c15)).to_le_bytes());
        let ux = ((h & 0xffff) as f32 / 65535.0) * 2.0 - 1.0;
        let uy = (((h >> 16) & 0xffff) as f32 / 65535.0) * 2.0 - 1.0;
        (ux * self.glyph_shape_offsets, uy * self.glyph_shape_offsets)
    }

    /// Deterministic baseline offset for the glyph at `index`, in pixels.
    pub fn jitter(&self, index: usize) -> f32 {
        let h = fnv1a64(&(self.style_seed.wrapping_add(0xabcdef) ^ (index as u64) << 40).to_le_bytes());
        (((h >> 8) & 0xffff) as f32 / 65535.0 * 2.0 - 1.0) * self.baseline_jitter
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_identical_params() {
        let a = generate_writer_style(0);
        let b = generate_writer_style(0);
        assert_eq!(a.slant, b.slant);
        assert_eq!(a.stroke_width, b.stroke_width);
        assert_eq!(a.ambiguity_profile, b.ambiguity_profile);
    }

    #[test]
    fn distinct_seeds_differ() {
        let a = generate_writer_style(0);
        let b = generate_writer_style(1);
        assert!(a.slant != b.slant || a.stroke_width != b.stroke_width);

        // over 100 seed pairs, at least 95% differ in some field
        let mut differ = 0;
        for s in 0..100u64 {
            let x = generate_writer_style(2 * s);
            let y = generate_writer_style(2 * s + 1);
            if x.slant != y.slant
                || x.stroke_width != y.stroke_width
                || x.glyph_spacing != y.glyph_spacing
                || x.ambiguity_profile != y.ambiguity_profile
            {
                differ += 1;
            }
        }
        assert!(differ >= 95, "only {differ} of 100 pairs differ");
    }

    #[test]
    fn profile_is_never_empty() {
        let s = generate_writer_style(7);
        assert!(s.ambiguity_profile.len() >= 2);
    }

    #[test]
    fn resolve_glyph_follows_choice() {
        let mut s = generate_writer_style(3);
        s.ambiguity_profile
            .insert(('o', '0'), AmbiguityChoice::Swapped);
        assert_eq!(s.resolve_glyph('o'), '0');
        assert_eq!(s.resolve_glyph('0'), 'o');
        s.ambiguity_profile
            .insert(('o', '0'), AmbiguityChoice::MergedFirst);
        assert_eq!(s.resolve_glyph('o'), 'o');
        assert_eq!(s.resolve_glyph('0'), 'o');
        assert_eq!(s.resolve_glyph('x'), 'x');
    }

    #[test]
    fn choice_mix_covers_all_variants() {
        let mut counts = BTreeMap::new();
        for seed in 0..400u64 {
            let s = generate_writer_style(seed);
            for (_, &c) in &s.ambiguity_profile {
                *counts.entry(format!("{c:?}")).or_insert(0usize) += 1;
            }
        }
        assert_eq!(counts.len(), 4, "expected all four choices: {counts:?}");
    }
}
