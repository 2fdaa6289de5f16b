//! Synthetic multi-writer line corpus: style-parametrized rendering, cluster
//! partitioning, augmentation and manifest I/O.

pub mod augment;
pub mod glyphs;
pub mod partition;
pub mod render;
pub mod style;

pub use augment::{augment, AugmentationConfig, PatchMask};
pub use partition::{
    cluster_label_for_count, partition, ClusterPartition, Split, CLUSTER_HOLDOUT, CLUSTER_LABELS,
    CLUSTER_THRESHOLDS,
};
pub use render::render_line;
pub use style::{generate_writer_style, AmbiguityChoice, WriterStyleParams, AMBIGUITY_PAIRS};

use crate::charset::{fnv1a64, Charset};
use crate::error::{Error, Result};
use image::GrayImage;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// One sample of the corpus: image location, writer style identifier,
/// transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineRecord {
    pub rel_path: String,
    pub wsi: usize,
    pub transcript: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinesDist {
    /// Every writer has the same number of lines.
    Fixed { lines: usize },
    /// Log-uniform between min and max, the long-tail shape of real corpora.
    LogUniform { min: usize, max: usize },
    /// Explicit per-writer counts (cycled if shorter than n_writers).
    Explicit { counts: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TextSpec {
    pub len_min: usize,
    pub len_max: usize,
    /// Sampling weight of ambiguity-pair characters relative to plain letters.
    pub pair_char_weight: f32,
    /// Probability of a space at eligible positions.
    pub space_prob: f32,
}

impl Default for TextSpec {
    fn default() -> Self {
        TextSpec {
            len_min: 6,
            len_max: 10,
            pair_char_weight: 2.0,
            space_prob: 0.12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_writers: usize,
    pub lines_per_writer: LinesDist,
    pub text: TextSpec,
    pub height: usize,
    pub charset: String,
}

impl CorpusSpec {
    pub fn desk_default() -> Self {
        CorpusSpec {
            n_writers: 44,
            lines_per_writer: LinesDist::LogUniform { min: 24, max: 420 },
            text: TextSpec::default(),
            height: 32,
            charset: Charset::default_desk().as_string(),
        }
    }
}

/// Style seed for writer `wsi` of a corpus.
pub fn writer_style_seed(corpus_seed: u64, wsi: usize) -> u64 {
    fnv1a64(&[corpus_seed.to_le_bytes(), (wsi as u64).to_le_bytes()].concat())
}

fn line_rng(corpus_seed: u64, wsi: usize, line: usize) -> ChaCha8Rng {
    let h = fnv1a64(
        &[
            corpus_seed.to_le_bytes(),
            (wsi as u64).to_le_bytes(),
            (line as u64 ^ 0xf00d).to_le_bytes(),
        ]
        .concat(),
    );
    ChaCha8Rng::seed_from_u64(h)
}

fn sample_text(charset: &Charset, spec: &TextSpec, rng: &mut impl Rng) -> String {
    let pair_chars: Vec<char> = AMBIGUITY_PAIRS.iter().flat_map(|&(a, b)| [a, b]).collect();
    let letters: Vec<char> = charset
        .chars()
        .iter()
        .copied()
        .filter(|c| *c != ' ')
        .collect();
    let weights: Vec<f32> = letters
        .iter()
        .map(|c| {
            if pair_chars.contains(c) {
                spec.pair_char_weight
            } else {
                1.0
            }
        })
        .collect();
    let total: f32 = weights.iter().sum();
    let len = rng.random_range(spec.len_min..=spec.len_max);
    let mut out = String::new();
    let mut prev_space = true; // no leading space
    for i in 0..len {
        let last = i + 1 == len;
        if !prev_space && !last && charset.contains(' ') && rng.random_range(0.0..1.0f32) < spec.space_prob
        {
            out.push(' ');
            prev_space = true;
            continue;
        }
        let mut u = rng.random_range(0.0..total);
        let mut picked = letters[letters.len() - 1];
        for (c, w) in letters.iter().zip(weights.iter()) {
            if u < *w {
                picked = *c;
                break;
            }
            u -= w;
        }
        out.push(picked);
        prev_space = false;
    }
    out
}

fn writer_line_counts(spec: &CorpusSpec, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0047);
    (0..spec.n_writers)
        .map(|w| match &spec.lines_per_writer {
            LinesDist::Fixed { lines } => *lines,
            LinesDist::LogUniform { min, max } => {
                let lo = (*min as f64).ln();
                let hi = (*max as f64).max(*min as f64 + 1.0).ln();
                rng.random_range(lo..hi).exp().round().max(1.0) as usize
            }
            LinesDist::Explicit { counts } => counts[w % counts.len()],
        })
        .collect()
}

/// The records of a corpus without images: enough for partitioning and text
/// statistics, cheap enough for property tests.
pub fn plan_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<LineRecord>> {
    if spec.n_writers == 0 {
        return Err(Error::Invalid("corpus needs at least one writer".into()));
    }
    let charset = Charset::from_str_chars(&spec.charset)?;
    let counts = writer_line_counts(spec, seed);
    let mut records = Vec::new();
    for (wsi, &n) in counts.iter().enumerate() {
        for line in 0..n {
            let mut rng = line_rng(seed, wsi, line);
            let transcript = sample_text(&charset, &spec.text, &mut rng);
            records.push(LineRecord {
                rel_path: format!("images/w{wsi:03}_l{line:05}.png"),
                wsi,
                transcript,
            });
        }
    }
    Ok(records)
}

/// A fully rendered corpus held in memory.
pub struct Corpus {
    pub spec: CorpusSpec,
    pub seed: u64,
    pub charset: Charset,
    pub records: Vec<LineRecord>,
    pub styles: Vec<WriterStyleParams>,
    pub images: Vec<GrayImage>,
}

impl Corpus {
    pub fn generate(spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
        let charset = Charset::from_str_chars(&spec.charset)?;
        let records = plan_corpus(spec, seed)?;
        let styles: Vec<WriterStyleParams> = (0..spec.n_writers)
            .map(|w| generate_writer_style(writer_style_seed(seed, w)))
            .collect();
        let images: Result<Vec<GrayImage>> = records
            .par_iter()
            .map(|r| render_line(&styles[r.wsi], &r.transcript, spec.height))
            .collect();
        Ok(Corpus {
            spec: spec.clone(),
            seed,
            charset,
            records,
            styles,
            images: images?,
        })
    }

    pub fn n_writers(&self) -> usize {
        self.spec.n_writers
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Ids of all lines belonging to one writer.
    pub fn lines_of_writer(&self, wsi: usize) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.wsi == wsi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes images and the manifest under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        for (r, img) in self.records.iter().zip(self.images.iter()) {
            let path = dir.join(&r.rel_path);
            img.save(&path).map_err(|e| Error::Format {
                what: "png",
                path: path.clone(),
                detail: e.to_string(),
            })?;
        }
        write_manifest(&dir.join("manifest.tsv"), &self.records)
    }

    /// Loads a corpus from a manifest and its image files.
    pub fn load(dir: &Path, spec: &CorpusSpec) -> Result<Corpus> {
        let charset = Charset::from_str_chars(&spec.charset)?;
        let records = read_manifest(&dir.join("manifest.tsv"))?;
        for r in &records {
            charset.encode(&r.transcript)?;
        }
        let n_writers = records.iter().map(|r| r.wsi + 1).max().unwrap_or(0);
        let images: Result<Vec<GrayImage>> = records
            .par_iter()
            .map(|r| {
                let path = dir.join(&r.rel_path);
                let img = image::open(&path)
                    .map_err(|e| Error::Format {
                        what: "png",
                        path: path.clone(),
                        detail: e.to_string(),
                    })?
                    .into_luma8();
                Ok(img)
            })
            .collect();
        let mut spec = spec.clone();
        spec.n_writers = n_writers;
        Ok(Corpus {
            spec,
            seed: 0,
            charset,
            records,
            styles: Vec::new(),
            images: images?,
        })
    }
}

pub fn write_manifest(path: &Path, records: &[LineRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("{}\t{}\t{}\n", r.rel_path, r.wsi, r.transcript));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<LineRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |detail: String| Error::Format {
            what: "manifest",
            path: path.to_path_buf(),
            detail,
        };
        let mut parts = line.splitn(3, '\t');
        let rel_path = parts
            .next()
            .ok_or_else(|| bad(format!("line {}: missing path", ln + 1)))?
            .to_string();
        let wsi: usize = parts
            .next()
            .ok_or_else(|| bad(format!("line {}: missing wsi", ln + 1)))?
            .parse()
            .map_err(|_| bad(format!("line {}: bad wsi", ln + 1)))?;
        let transcript = parts
            .next()
            .ok_or_else(|| bad(format!("line {}: missing transcript", ln + 1)))?
            .to_string();
        records.push(LineRecord {
            rel_path,
            wsi,
            transcript,
        });
    }
    Ok(records)
}
