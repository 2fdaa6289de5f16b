//! Contrastive writer-style encoder: a convolutional stack, attention blocks
//! over the width axis, width pooling and L2 normalization, trained so that
//! lines of one writer embed close together.

pub mod ntxent;

pub use ntxent::{batch_loss, batch_loss_grad, nt_xent_pair};

use crate::charset::fnv1a64;
use crate::dataset::{augment, AugmentationConfig, Corpus};
use crate::error::{Error, Result};
use crate::nn::attention::{add_positional, AttentionBlock, AttentionBlockCtx};
use crate::nn::conv::{Conv2d, Conv2dCtx, Linear, LinearCtx};
use crate::nn::init::param_rng;
use crate::nn::optim::{Adam, AdamParams};
use crate::nn::param::{GradStore, ParamStore};
use crate::nn::{l2_normalize, relu, relu_backward};
use crate::recognizer::image_to_input;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::GrayImage;
use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Channels of the four stride-2 conv layers.
    pub conv_channels: Vec<usize>,
    pub attention_blocks: usize,
    pub attention_heads: usize,
    /// Feed-forward expansion inside each attention block.
    pub ff_mult: usize,
    /// Output embedding dimension (projected before width pooling).
    pub ed: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            conv_channels: vec![32, 64, 128, 512],
            attention_blocks: 3,
            attention_heads: 4,
            ff_mult: 2,
            ed: 256,
        }
    }
}

impl EncoderConfig {
    pub fn desk(ed: usize) -> Self {
        EncoderConfig {
            conv_channels: vec![8, 16, 32, 64],
            attention_blocks: 2,
            attention_heads: 4,
            ff_mult: 2,
            ed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.len() != 4 {
            return Err(Error::Config("encoder needs 4 conv layers".into()));
        }
        let dim = *self.conv_channels.last().unwrap();
        if dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "attention width {dim} not divisible by {} heads",
                self.attention_heads
            )));
        }
        if self.ed == 0 {
            return Err(Error::Config("ed must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub writers_per_batch: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub tau: f64,
    /// Augmentation strength multiplier relative to recognizer training.
    pub aug_strength: f32,
    pub seed: u64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        // paper scale: 20k iterations, batch 180, lr 2e-4, tau 0.15
        EncoderTrainConfig {
            iterations: 20_000,
            batch_size: 180,
            writers_per_batch: 45,
            lr: 2e-4,
            weight_decay: 0.01,
            tau: 0.15,
            aug_strength: 1.5,
            seed: 0,
        }
    }
}

pub struct StyleEncoder {
    pub cfg: EncoderConfig,
    pub store: ParamStore,
    convs: Vec<Conv2d>,
    blocks: Vec<AttentionBlock>,
    proj: Linear,
}

pub struct EncodeTape {
    convs: Vec<(Conv2dCtx, Array3<f32>)>,
    pooled_height: usize,
    blocks: Vec<AttentionBlockCtx>,
    proj: LinearCtx,
    t_len: usize,
    norm: f32,
    q: Array1<f32>,
}

impl StyleEncoder {
    pub fn build(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let mut c_in = 1usize;
        for (i, &c_out) in cfg.conv_channels.iter().enumerate() {
            let name = format!("enc.conv{i}");
            let mut rng = param_rng(seed, &name);
            convs.push(Conv2d::new(
                &mut store,
                &name,
                c_in,
                c_out,
                (3, 3),
                (2, 2),
                &mut rng,
            ));
            c_in = c_out;
        }
        let dim = *cfg.conv_channels.last().unwrap();
        let mut blocks = Vec::new();
        for b in 0..cfg.attention_blocks {
            let name = format!("enc.block{b}");
            let mut rng = param_rng(seed, &name);
            blocks.push(AttentionBlock::new(
                &mut store,
                &name,
                dim,
                cfg.attention_heads,
                cfg.ff_mult,
                &mut rng,
            ));
        }
        let mut rng = param_rng(seed, "enc.proj");
        let proj = Linear::new(&mut store, "enc.proj", dim, cfg.ed, &mut rng);
        Ok(StyleEncoder {
            cfg,
            store,
            convs,
            blocks,
            proj,
        })
    }

    /// Unit-norm style embedding of a line image (as [H, W] floats).
    pub fn encode_input(&self, input: &Array2<f32>) -> Result<Array1<f32>> {
        self.forward(input).map(|(q, _)| q)
    }

    pub fn encode_image(&self, img: &GrayImage) -> Result<Array1<f32>> {
        self.encode_input(&image_to_input(img))
    }

    pub fn forward(&self, input: &Array2<f32>) -> Result<(Array1<f32>, EncodeTape)> {
        let (h, w) = input.dim();
        if h == 0 || w == 0 {
            return Err(Error::DimensionMismatch("empty image".into()));
        }
        let mut x = input.to_owned().into_shape_with_order((1, h, w)).unwrap();
        let mut conv_tapes = Vec::new();
        for conv in &self.convs {
            let (y, ctx) = conv.forward(&self.store, &x);
            let dims = y.dim();
            let y2 = relu(&y.into_shape_with_order((dims.0, dims.1 * dims.2)).unwrap());
            let y3 = y2.into_shape_with_order(dims).unwrap();
            conv_tapes.push((ctx, y3.clone()));
            x = y3;
        }
        // average the remaining height into a width-indexed sequence
        let (c, hr, t_len) = x.dim();
        let mut seq = Array2::<f32>::zeros((t_len, c));
        for ci in 0..c {
            for hi in 0..hr {
                for t in 0..t_len {
                    seq[[t, ci]] += x[[ci, hi, t]] / hr as f32;
                }
            }
        }
        add_positional(&mut seq);

        let mut block_tapes = Vec::new();
        for block in &self.blocks {
            let (y, ctx) = block.forward(&self.store, &seq);
            block_tapes.push(ctx);
            seq = y;
        }

        let (z, proj_ctx) = self.proj.forward(&self.store, &seq); // [T, ED]
        let mut raw = Array1::<f32>::zeros(self.cfg.ed);
        for t in 0..t_len {
            for d in 0..self.cfg.ed {
                raw[d] += z[[t, d]] / t_len as f32;
            }
        }
        let mut q = raw;
        let norm = l2_normalize(&mut q);
        Ok((
            q.clone(),
            EncodeTape {
                convs: conv_tapes,
                pooled_height: hr,
                blocks: block_tapes,
                proj: proj_ctx,
                t_len,
                norm,
                q,
            },
        ))
    }

    /// Backward from a gradient on the unit-norm embedding.
    pub fn backward(&self, tape: &EncodeTape, dq: &Array1<f32>, grads: &mut GradStore) {
        // through L2 normalization: d_raw = (dq - q (q . dq)) / norm
        let qdots: f32 = tape.q.iter().zip(dq.iter()).map(|(&a, &b)| a * b).sum();
        let norm = tape.norm.max(1e-12);
        let draw: Array1<f32> = dq
            .iter()
            .zip(tape.q.iter())
            .map(|(&g, &qv)| (g - qv * qdots) / norm)
            .collect();

        // through width mean pooling
        let mut dz = Array2::<f32>::zeros((tape.t_len, self.cfg.ed));
        for t in 0..tape.t_len {
            for d in 0..self.cfg.ed {
                dz[[t, d]] = draw[d] / tape.t_len as f32;
            }
        }

        let mut dseq = self.proj.backward(&self.store, &tape.proj, &dz, grads);
        for (block, ctx) in self.blocks.iter().zip(tape.blocks.iter()).rev() {
            dseq = block.backward(&self.store, ctx, &dseq, grads);
        }

        // positional signal is additive: gradient passes through unchanged;
        // un-pool the height mean
        let (_, last_out) = tape.convs.last().unwrap();
        let dims = last_out.dim();
        let mut dx = Array3::<f32>::zeros(dims);
        let hr = tape.pooled_height;
        for ci in 0..dims.0 {
            for hi in 0..hr {
                for t in 0..dims.2 {
                    dx[[ci, hi, t]] = dseq[[t, ci]] / hr as f32;
                }
            }
        }

        for (conv, (ctx, fwd_out)) in self.convs.iter().zip(tape.convs.iter()).rev() {
            let d = dx.dim();
            let flat = dx.into_shape_with_order((d.0, d.1 * d.2)).unwrap();
            let fwd_dims = fwd_out.dim();
            let fwd_flat = fwd_out
                .view()
                .into_shape_with_order((fwd_dims.0, fwd_dims.1 * fwd_dims.2))
                .unwrap();
            let masked = relu_backward(&flat, &fwd_flat.to_owned());
            dx = conv.backward(&self.store, ctx, &masked.into_shape_with_order(d).unwrap(), grads);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&self.cfg).map_err(|e| Error::Invalid(e.to_string()))?;
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(b"WSEN").map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(1).map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(header.len() as u32)
            .map_err(|e| Error::io(path, e))?;
        w.write_all(&header).map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(self.store.len() as u32)
            .map_err(|e| Error::io(path, e))?;
        for (_, name, value) in self.store.iter() {
            w.write_u16::<LittleEndian>(name.len() as u16)
                .map_err(|e| Error::io(path, e))?;
            w.write_all(name.as_bytes()).map_err(|e| Error::io(path, e))?;
            w.write_u64::<LittleEndian>(value.len() as u64)
                .map_err(|e| Error::io(path, e))?;
            for &v in value.iter() {
                w.write_f32::<LittleEndian>(v).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<StyleEncoder> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != b"WSEN" {
            return Err(Error::Format {
                what: "encoder checkpoint",
                path: path.to_path_buf(),
                detail: "bad magic".into(),
            });
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        if version != 1 {
            return Err(Error::Format {
                what: "encoder checkpoint",
                path: path.to_path_buf(),
                detail: format!("unsupported version {version}"),
            });
        }
        let hlen = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let mut header = vec![0u8; hlen];
        r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let cfg: EncoderConfig = serde_json::from_slice(&header).map_err(|e| Error::Format {
            what: "encoder checkpoint",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let mut enc = StyleEncoder::build(cfg, 0)?;
        let n = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        if n != enc.store.len() {
            return Err(Error::Format {
                what: "encoder checkpoint",
                path: path.to_path_buf(),
                detail: format!("expected {} params, found {n}", enc.store.len()),
            });
        }
        for _ in 0..n {
            let nlen = r.read_u16::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
            let mut nm = vec![0u8; nlen];
            r.read_exact(&mut nm).map_err(|e| Error::io(path, e))?;
            let name = String::from_utf8(nm).map_err(|e| Error::Format {
                what: "encoder checkpoint",
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
            let numel = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
            let id = enc.store.id_by_name(&name).ok_or_else(|| Error::Format {
                what: "encoder checkpoint",
                path: path.to_path_buf(),
                detail: format!("unknown parameter {name}"),
            })?;
            if enc.store.get(id).len() != numel {
                return Err(Error::Format {
                    what: "encoder checkpoint",
                    path: path.to_path_buf(),
                    detail: format!("size mismatch for {name}"),
                });
            }
            let dst = enc.store.get_mut(id);
            for v in dst.iter_mut() {
                *v = r.read_f32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(enc)
    }

    /// Content hash of all parameters (recorded in extraction sidecars).
    pub fn params_hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for (_, _, v) in self.store.iter() {
            for &x in v.iter() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }
}

/// Aggregation over per-line embeddings: pick the embedding with the largest
/// sum of above-average cosine similarities. The average is over all distinct
/// pairs; "above" is strict; ties resolve to the lowest index. The result is
/// always one of the inputs.
pub fn aggregate(embeddings: &[Array1<f32>]) -> Result<Array1<f32>> {
    aggregate_index(embeddings).map(|i| embeddings[i].clone())
}

pub fn aggregate_index(embeddings: &[Array1<f32>]) -> Result<usize> {
    let k = embeddings.len();
    if k < 2 {
        return Err(Error::TooFewEmbeddings(k));
    }
    let mut sims = vec![vec![0.0f64; k]; k];
    let mut sum = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, b) = (&embeddings[i], &embeddings[j]);
            let dot: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| x as f64 * y as f64).sum();
            let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let s = dot / (na * nb).max(1e-12);
            sims[i][j] = s;
            sims[j][i] = s;
            sum += s;
        }
    }
    let mean = sum / (k * (k - 1) / 2) as f64;
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..k {
        let score: f64 = (0..k)
            .filter(|&j| j != i && sims[i][j] > mean)
            .map(|j| sims[i][j])
            .sum();
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(best)
}

/// Writer embedding: encode up to `k` distinct randomly drawn lines of a
/// writer (no augmentation) and aggregate.
pub fn extract_writer_embedding(
    encoder: &StyleEncoder,
    corpus: &Corpus,
    line_ids: &[usize],
    k: usize,
    rng: &mut impl Rng,
) -> Result<Array1<f32>> {
    if line_ids.is_empty() {
        return Err(Error::Invalid("writer has no lines".into()));
    }
    let mut ids = line_ids.to_vec();
    ids.shuffle(rng);
    ids.truncate(k.min(ids.len()));
    let embeddings: Result<Vec<Array1<f32>>> = ids
        .par_iter()
        .map(|&id| encoder.encode_image(&corpus.images[id]))
        .collect();
    let embeddings = embeddings?;
    if embeddings.len() == 1 {
        return Ok(embeddings.into_iter().next().unwrap());
    }
    aggregate(&embeddings)
}

/// Sidecar metadata written next to extracted embedding tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractMeta {
    pub k: usize,
    pub seed: u64,
    pub encoder_hash: u64,
}

/// One batch of the contrastive sampler: `writers_per_batch` writers, then
/// ceil(batch / writers) lines each, so at least half the writers contribute
/// a positive pair whenever they have two lines.
pub fn sample_contrastive_batch(
    corpus: &Corpus,
    writers: &[usize],
    batch_size: usize,
    writers_per_batch: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let w = writers_per_batch.clamp(1, writers.len());
    let mut chosen = writers.to_vec();
    chosen.shuffle(rng);
    chosen.truncate(w);
    let per = batch_size.div_ceil(w);
    let mut out = Vec::new();
    for &wsi in &chosen {
        let lines = corpus.lines_of_writer(wsi);
        if lines.is_empty() {
            continue;
        }
        let mut l = lines.clone();
        l.shuffle(rng);
        for i in 0..per {
            out.push(if i < l.len() {
                l[i]
            } else {
                lines[rng.random_range(0..lines.len())]
            });
            if out.len() == batch_size {
                return out;
            }
        }
    }
    out
}

pub struct EncoderTrainReport {
    pub losses: Vec<f64>,
}

/// Contrastive pre-training over a corpus. Augmentation is the recognizer's
/// set, strengthened, with patch masking off.
pub fn train_encoder(
    encoder: &mut StyleEncoder,
    corpus: &Corpus,
    base_augmentation: &AugmentationConfig,
    cfg: &EncoderTrainConfig,
) -> Result<EncoderTrainReport> {
    let writers: Vec<usize> = (0..corpus.n_writers())
        .filter(|&w| corpus.lines_of_writer(w).len() >= 2)
        .collect();
    if writers.is_empty() {
        return Err(Error::NoPositivePair);
    }
    let aug = base_augmentation.scaled_no_patches(cfg.aug_strength);
    aug.validate()?;
    let mut adam = Adam::new(
        &encoder.store,
        AdamParams {
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    let mut losses = Vec::new();
    for iter in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(
            &[cfg.seed.to_le_bytes(), (iter as u64).to_le_bytes()].concat(),
        ));
        let batch = sample_contrastive_batch(
            corpus,
            &writers,
            cfg.batch_size,
            cfg.writers_per_batch,
            &mut rng,
        );
        let wsi: Vec<usize> = batch.iter().map(|&id| corpus.records[id].wsi).collect();

        let passes: Result<Vec<(Array1<f32>, EncodeTape)>> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &id)| {
                let mut aug_rng = ChaCha8Rng::seed_from_u64(fnv1a64(
                    &[
                        cfg.seed.to_le_bytes(),
                        (iter as u64 ^ 0xe0c0).to_le_bytes(),
                        (slot as u64).to_le_bytes(),
                    ]
                    .concat(),
                ));
                let img = augment(&corpus.images[id], &aug, &mut aug_rng);
                encoder.forward(&image_to_input(&img))
            })
            .collect();
        let passes = passes?;
        let embeddings: Vec<Array1<f32>> = passes.iter().map(|(q, _)| q.clone()).collect();
        let (loss, dqs) = batch_loss_grad(&embeddings, &wsi, cfg.tau)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iter,
                detail: format!("encoder loss {loss}"),
            });
        }

        let grad_parts: Vec<GradStore> = passes
            .par_iter()
            .zip(dqs.par_iter())
            .map(|((_, tape), dq)| {
                let mut g = encoder.store.zero_grads();
                encoder.backward(tape, dq, &mut g);
                g
            })
            .collect();
        let mut grads = encoder.store.zero_grads();
        for g in &grad_parts {
            grads.add_assign(g);
        }
        adam.step(&mut encoder.store, &grads, cfg.lr, |_| true);
        losses.push(loss);
    }
    Ok(EncoderTrainReport { losses })
}

/// Mean same-writer and cross-writer cosine similarity over a line set.
pub fn cosine_separation(
    encoder: &StyleEncoder,
    corpus: &Corpus,
    ids: &[usize],
) -> Result<(f64, f64)> {
    let embeddings: Result<Vec<Array1<f32>>> = ids
        .par_iter()
        .map(|&id| encoder.encode_image(&corpus.images[id]))
        .collect();
    let embeddings = embeddings?;
    let mut same = (0.0f64, 0usize);
    let mut cross = (0.0f64, 0usize);
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let dot: f64 = embeddings[i]
                .iter()
                .zip(embeddings[j].iter())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            if corpus.records[ids[i]].wsi == corpus.records[ids[j]].wsi {
                same.0 += dot;
                same.1 += 1;
            } else {
                cross.0 += dot;
                cross.1 += 1;
            }
        }
    }
    Ok((
        same.0 / same.1.max(1) as f64,
        cross.0 / cross.1.max(1) as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CorpusSpec, LinesDist, TextSpec};
    use ndarray::array;

    fn micro_encoder() -> StyleEncoder {
        StyleEncoder::build(
            EncoderConfig {
                conv_channels: vec![2, 3, 4, 8],
                attention_blocks: 1,
                attention_heads: 2,
                ff_mult: 2,
                ed: 6,
            },
            3,
        )
        .unwrap()
    }

    fn micro_corpus(seed: u64) -> Corpus {
        Corpus::generate(
            &CorpusSpec {
                n_writers: 3,
                lines_per_writer: LinesDist::Fixed { lines: 6 },
                text: TextSpec {
                    len_min: 2,
                    len_max: 4,
                    pair_char_weight: 2.0,
                    space_prob: 0.0,
                },
                height: 16,
                charset: crate::charset::Charset::default_desk().as_string(),
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn encode_output_is_unit_norm_and_width_independent() {
        let enc = micro_encoder();
        for w in [20usize, 55, 200] {
            let input = Array2::from_shape_fn((16, w), |(y, x)| ((y * w + x) as f32 * 0.01).sin());
            let q = enc.encode_input(&input).unwrap();
            assert_eq!(q.len(), 6);
            let n: f64 = q.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "norm {n} at width {w}");
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let enc = micro_encoder();
        let input = Array2::from_shape_fn((16, 40), |(y, x)| ((y + x) as f32 * 0.05).cos());
        assert_eq!(
            enc.encode_input(&input).unwrap(),
            enc.encode_input(&input).unwrap()
        );
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let enc = micro_encoder();
        let input = Array2::from_shape_fn((16, 24), |(y, x)| ((y * 3 + x) as f32 * 0.07).sin());
        let coef = Array1::from_shape_fn(6, |d| ((d * 7) as f32 * 0.3).cos());
        let (q, tape) = enc.forward(&input).unwrap();
        let _ = q;
        let mut grads = enc.store.zero_grads();
        enc.backward(&tape, &coef, &mut grads);

        let mut store = enc.store.clone();
        let ids: Vec<_> = store
            .iter()
            .map(|(id, name, p)| (id, name.to_string(), p.len()))
            .collect();
        let eval = |s: &ParamStore| -> f64 {
            let mut e2 = micro_encoder();
            for (pid, _, v) in s.iter() {
                e2.store.get_mut(pid).assign(v);
            }
            let q = e2.encode_input(&input).unwrap();
            q.iter()
                .zip(coef.iter())
                .map(|(&a, &c)| a as f64 * c as f64)
                .sum()
        };
        for (id, name, len) in ids {
            let probes = 2.min(len);
            for k in 0..probes {
                let flat = (k * len) / probes;
                let analytic = grads.get(id).as_slice().unwrap()[flat] as f64;
                let h = 2e-4f32;
                let orig = store.get(id).as_slice().unwrap()[flat];
                store.get_mut(id).as_slice_mut().unwrap()[flat] = orig + h;
                let lp = eval(&store);
                store.get_mut(id).as_slice_mut().unwrap()[flat] = orig - h;
                let lm = eval(&store);
                store.get_mut(id).as_slice_mut().unwrap()[flat] = orig;
                let fd = (lp - lm) / (2.0 * h as f64);
                if analytic.abs() < 2e-2 && fd.abs() < 2e-2 {
                    continue;
                }
                let err = crate::nn::gradcheck::rel_err(analytic, fd);
                assert!(
                    err < 3e-2,
                    "{name}[{flat}]: analytic {analytic:.4e} fd {fd:.4e} err {err:.2e}"
                );
            }
        }
    }

    #[test]
    fn aggregate_hand_example() {
        // sims: s12 = 0.9, s13 = 0.1, s23 = 0.2 -> mean 0.4
        // scores: (0.9, 0.9, 0) -> tie between 0 and 1, lowest index wins
        let a = 0.9f32;
        // construct three unit vectors with the desired pairwise cosines
        // q1 = (1,0,0); q2 = (0.9, sqrt(1-0.81), 0)
        let q1 = array![1.0f32, 0.0, 0.0];
        let q2 = array![a, (1.0 - a * a).sqrt(), 0.0];
        // q3: cos(q1,q3)=0.1, cos(q2,q3)=0.2 -> solve in 3d
        let x = 0.1f32;
        let y = (0.2 - 0.9 * 0.1) / (1.0f32 - 0.81).sqrt();
        let z = (1.0 - x * x - y * y).sqrt();
        let q3 = array![x, y, z];
        let idx = aggregate_index(&[q1, q2, q3]).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn aggregate_all_equal_sims_picks_first() {
        let q = array![1.0f32, 0.0];
        let idx = aggregate_index(&[q.clone(), q.clone(), q.clone()]).unwrap();
        assert_eq!(idx, 0); // strict > leaves all scores 0

        // k = 2: mean = s12, strict > gives scores (0,0) -> first
        let q2 = array![0.0f32, 1.0];
        assert_eq!(aggregate_index(&[q.clone(), q2]).unwrap(), 0);
    }

    #[test]
    fn aggregate_needs_two() {
        assert!(matches!(
            aggregate(&[array![1.0f32, 0.0]]),
            Err(Error::TooFewEmbeddings(1))
        ));
    }

    #[test]
    fn aggregate_output_is_an_input_and_permutation_equivariant() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let k = rng.random_range(2..8usize);
            let embeddings: Vec<Array1<f32>> = (0..k)
                .map(|_| {
                    let mut v = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0f32));
                    l2_normalize(&mut v);
                    v
                })
                .collect();
            let picked = aggregate(&embeddings).unwrap();
            assert!(
                embeddings.iter().any(|e| e == &picked),
                "aggregate must select, not average"
            );

            // reversal keeps the same similarity structure; the selected
            // vector may change only through the tie rule
            let mut reversed = embeddings.clone();
            reversed.reverse();
            let idx_fwd = aggregate_index(&embeddings).unwrap();
            let idx_rev = aggregate_index(&reversed).unwrap();
            let score = |es: &[Array1<f32>], i: usize| -> f64 {
                let k = es.len();
                let mut sims = vec![0.0f64; k];
                let mut mean = 0.0;
                for a in 0..k {
                    for b in (a + 1)..k {
                        let d: f64 = es[a]
                            .iter()
                            .zip(es[b].iter())
                            .map(|(&x, &y)| x as f64 * y as f64)
                            .sum();
                        mean += d;
                        if a == i {
                            sims[b] = d;
                        }
                        if b == i {
                            sims[a] = d;
                        }
                    }
                }
                mean /= (k * (k - 1) / 2) as f64;
                sims.iter().filter(|&&s| s > mean).sum()
            };
            let s_fwd = score(&embeddings, idx_fwd);
            let s_rev = score(&reversed, idx_rev);
            assert!((s_fwd - s_rev).abs() < 1e-9, "scores differ under permutation");
        }
    }

    #[test]
    fn extraction_uses_min_k_available_and_returns_unit_norm() {
        let enc = micro_encoder();
        let corpus = micro_corpus(2);
        let lines = corpus.lines_of_writer(0);
        assert_eq!(lines.len(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = extract_writer_embedding(&enc, &corpus, &lines, 32, &mut rng).unwrap();
        let n: f64 = e.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        // fewer lines than k: all are used, still works
        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let e2 = extract_writer_embedding(&enc, &corpus, &lines[..3], 32, &mut rng2).unwrap();
        assert_eq!(e2.len(), 6);
    }

    #[test]
    fn sampler_gives_positive_pairs_to_most_writers() {
        let corpus = micro_corpus(3);
        let writers: Vec<usize> = (0..corpus.n_writers()).collect();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = sample_contrastive_batch(&corpus, &writers, 12, 3, &mut rng);
            assert_eq!(batch.len(), 12);
            let mut counts = std::collections::BTreeMap::new();
            for &id in &batch {
                *counts.entry(corpus.records[id].wsi).or_insert(0usize) += 1;
            }
            let with_pairs = counts.values().filter(|&&c| c >= 2).count();
            assert!(
                with_pairs * 2 >= counts.len(),
                "seed {seed}: {with_pairs} of {} writers have pairs",
                counts.len()
            );
        }
    }

    #[test]
    fn short_training_reduces_loss_on_micro_corpus() {
        let mut enc = micro_encoder();
        let corpus = micro_corpus(5);
        let cfg = EncoderTrainConfig {
            iterations: 60,
            batch_size: 9,
            writers_per_batch: 3,
            lr: 2e-3,
            weight_decay: 0.0,
            tau: 0.15,
            aug_strength: 0.0,
            seed: 11,
        };
        let report = train_encoder(&mut enc, &corpus, &AugmentationConfig::none(), &cfg).unwrap();
        let first: f64 = report.losses[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = report.losses[report.losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn encoder_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.wsen");
        let enc = micro_encoder();
        enc.save(&path).unwrap();
        let enc2 = StyleEncoder::load(&path).unwrap();
        let input = Array2::from_shape_fn((16, 30), |(y, x)| ((y + 2 * x) as f32 * 0.03).sin());
        assert_eq!(
            enc.encode_input(&input).unwrap(),
            enc2.encode_input(&input).unwrap()
        );
        assert_eq!(enc.params_hash(), enc2.params_hash());
    }
}
