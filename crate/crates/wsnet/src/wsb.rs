//! Writer style block: a per-writer embedding table plus embedding-conditioned
//! adaptive instance normalization.
//!
//! Each conditioned site computes per-channel scales and offsets from the
//! writer embedding through two affine projections,
//! gamma = W_gamma e + b_gamma and beta = W_beta e + b_beta, then applies
//! gamma * (x - mu) / (sigma + eps) + beta channel-wise. Projections are
//! private to each site; the embedding table is shared by all sites.

use crate::error::{Error, Result};
use crate::nn::norm::{channel_norm_backward, channel_norm_forward, NormCtx};
use crate::nn::param::{GradStore, ParamId, ParamStore};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DEFAULT_EPS: f32 = 1e-5;

/// Supported embedding dimensions. The low end matches the narrow published
/// range; 512 is included because the evaluation sweeps reach it.
pub const SUPPORTED_ED: [usize; 6] = [16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInit {
    Normal,
    Pretrained,
}

/// How the projection-matrix init bound depends on the embedding dimension.
///
/// `InvSqrtEd` draws entries from U(-tau/sqrt(ED), +tau/sqrt(ED)), which makes
/// std(gamma) = tau/sqrt(3) for e ~ N(0, I) independent of ED. `SqrtEd` uses
/// U(-tau*sqrt(ED), +tau*sqrt(ED)) instead; it is kept behind this switch for
/// comparison but grows the scale spread with ED, so it is not the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitBound {
    #[default]
    InvSqrtEd,
    SqrtEd,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitSpec {
    /// Scale constant; 0.174 puts std(gamma) at about 0.1.
    pub tau: f32,
    pub bound: InitBound,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            tau: 0.174,
            bound: InitBound::InvSqrtEd,
        }
    }
}

impl InitSpec {
    pub fn bound_for(&self, ed: usize) -> f32 {
        match self.bound {
            InitBound::InvSqrtEd => self.tau / (ed as f32).sqrt(),
            InitBound::SqrtEd => self.tau * (ed as f32).sqrt(),
        }
    }
}

/// The writer-dependent parameters: one ED-dimensional row per writer.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    rows: Array2<f32>,
    init_mode: EmbeddingInit,
}

impl EmbeddingTable {
    /// Rows drawn i.i.d. from the standard normal distribution.
    pub fn init_normal(n_writers: usize, ed: usize, rng: &mut impl Rng) -> Self {
        let rows = Array2::from_shape_fn((n_writers, ed), |_| {
            <StandardNormal as Distribution<f32>>::sample(&StandardNormal, rng)
        });
        EmbeddingTable {
            rows,
            init_mode: EmbeddingInit::Normal,
        }
    }

    /// Rows copied from a pre-trained source, one per writer ordered by WSI.
    pub fn from_pretrained(rows: Array2<f32>) -> Self {
        EmbeddingTable {
            rows,
            init_mode: EmbeddingInit::Pretrained,
        }
    }

    pub fn n_writers(&self) -> usize {
        self.rows.nrows()
    }

    pub fn ed(&self) -> usize {
        self.rows.ncols()
    }

    pub fn init_mode(&self) -> EmbeddingInit {
        self.init_mode
    }

    pub fn lookup(&self, wsi: usize) -> Result<ArrayView1<'_, f32>> {
        if wsi >= self.rows.nrows() {
            return Err(Error::UnknownWriter {
                wsi,
                known: self.rows.nrows(),
            });
        }
        Ok(self.rows.row(wsi))
    }

    pub fn rows(&self) -> &Array2<f32> {
        &self.rows
    }

    pub fn row_mut(&mut self, wsi: usize) -> ndarray::ArrayViewMut1<'_, f32> {
        self.rows.row_mut(wsi)
    }

    /// Mean of all rows; the starting point for embedding optimization.
    pub fn mean_row(&self) -> Array1<f32> {
        let n = self.rows.nrows() as f32;
        let mut m = Array1::<f32>::zeros(self.rows.ncols());
        for row in self.rows.rows() {
            m.zip_mut_with(&row, |a, &b| *a += b / n);
        }
        m
    }

    pub fn save(&self, path: &Path, charset_hash: u64) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(b"WSEM").map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(1).map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(self.rows.nrows() as u32)
            .map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(self.rows.ncols() as u32)
            .map_err(|e| Error::io(path, e))?;
        w.write_u8(match self.init_mode {
            EmbeddingInit::Normal => 0,
            EmbeddingInit::Pretrained => 1,
        })
        .map_err(|e| Error::io(path, e))?;
        w.write_u64::<LittleEndian>(charset_hash)
            .map_err(|e| Error::io(path, e))?;
        for &v in self.rows.iter() {
            w.write_f32::<LittleEndian>(v).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a table and returns it with the charset hash recorded at save time.
    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != b"WSEM" {
            return Err(Error::Format {
                what: "embedding table",
                path: path.to_path_buf(),
                detail: "bad magic".into(),
            });
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        if version != 1 {
            return Err(Error::Format {
                what: "embedding table",
                path: path.to_path_buf(),
                detail: format!("unsupported version {version}"),
            });
        }
        let n = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let ed = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let mode = match r.read_u8().map_err(|e| Error::io(path, e))? {
            0 => EmbeddingInit::Normal,
            1 => EmbeddingInit::Pretrained,
            m => {
                return Err(Error::Format {
                    what: "embedding table",
                    path: path.to_path_buf(),
                    detail: format!("unknown init mode {m}"),
                })
            }
        };
        let charset_hash = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        let mut data = vec![0f32; n * ed];
        for v in data.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        }
        let rows = Array2::from_shape_vec((n, ed), data)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Ok((
            EmbeddingTable {
                rows,
                init_mode: mode,
            },
            charset_hash,
        ))
    }
}

/// One conditioned normalization site.
#[derive(Debug, Clone)]
pub struct AdaInLayer {
    pub w_gamma: ParamId, // [C, ED]
    pub w_beta: ParamId,  // [C, ED]
    pub b_gamma: ParamId, // [C], ones at init
    pub b_beta: ParamId,  // [C], zeros at init
    pub channels: usize,
    pub ed: usize,
    pub eps: f32,
}

pub struct AdaInCtx {
    norm: NormCtx,
    e: Array1<f32>,
}

impl AdaInLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        ed: usize,
        spec: InitSpec,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = spec.bound_for(ed);
        let wg = Array2::from_shape_fn((channels, ed), |_| rng.random_range(-bound..bound));
        let wb = Array2::from_shape_fn((channels, ed), |_| rng.random_range(-bound..bound));
        AdaInLayer {
            w_gamma: store.register(format!("{name}.w_gamma"), wg.into_dyn()),
            w_beta: store.register(format!("{name}.w_beta"), wb.into_dyn()),
            b_gamma: store.register(
                format!("{name}.b_gamma"),
                Array1::<f32>::ones(channels).into_dyn(),
            ),
            b_beta: store.register(
                format!("{name}.b_beta"),
                Array1::<f32>::zeros(channels).into_dyn(),
            ),
            channels,
            ed,
            eps: DEFAULT_EPS,
        }
    }

    /// Scales and offsets for one embedding.
    pub fn project(&self, store: &ParamStore, e: &ArrayView1<f32>) -> (Array1<f32>, Array1<f32>) {
        assert_eq!(e.len(), self.ed, "embedding dimension");
        let wg: ndarray::ArrayView2<f32> =
            store.get(self.w_gamma).view().into_dimensionality().unwrap();
        let wb: ndarray::ArrayView2<f32> =
            store.get(self.w_beta).view().into_dimensionality().unwrap();
        let bg = store.get(self.b_gamma);
        let bb = store.get(self.b_beta);
        let mut gamma = wg.dot(e);
        let mut beta = wb.dot(e);
        for c in 0..self.channels {
            gamma[c] += bg[[c]];
            beta[c] += bb[[c]];
        }
        (gamma, beta)
    }

    /// x is channel-major [C, N] (spatial flattened); per-channel statistics
    /// are taken over each sample's own spatial extent.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Array2<f32>,
        e: &ArrayView1<f32>,
    ) -> (Array2<f32>, AdaInCtx) {
        let (gamma, beta) = self.project(store, e);
        let (y, norm) = channel_norm_forward(x, &gamma, &beta, self.eps);
        (
            y,
            AdaInCtx {
                norm,
                e: e.to_owned(),
            },
        )
    }

    /// Returns (dx, de) and accumulates projection gradients.
    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &AdaInCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> (Array2<f32>, Array1<f32>) {
        let (dx, dgamma, dbeta) = channel_norm_backward(&ctx.norm, grad_out, self.eps);
        for c in 0..self.channels {
            grads.get_mut(self.b_gamma)[[c]] += dgamma[c];
            grads.get_mut(self.b_beta)[[c]] += dbeta[c];
        }
        {
            let gw = grads.get_mut(self.w_gamma);
            for c in 0..self.channels {
                for j in 0..self.ed {
                    gw[[c, j]] += dgamma[c] * ctx.e[j];
                }
            }
        }
        {
            let gw = grads.get_mut(self.w_beta);
            for c in 0..self.channels {
                for j in 0..self.ed {
                    gw[[c, j]] += dbeta[c] * ctx.e[j];
                }
            }
        }
        let wg: ndarray::ArrayView2<f32> =
            store.get(self.w_gamma).view().into_dimensionality().unwrap();
        let wb: ndarray::ArrayView2<f32> =
            store.get(self.w_beta).view().into_dimensionality().unwrap();
        let de = wg.t().dot(&dgamma) + wb.t().dot(&dbeta);
        (dx, de)
    }

    /// Zeroes both projection matrices, reducing the layer to a plain
    /// instance norm with gamma = b_gamma, beta = b_beta.
    pub fn zero_projections(&self, store: &mut ParamStore) {
        store.get_mut(self.w_gamma).fill(0.0);
        store.get_mut(self.w_beta).fill(0.0);
    }
}

/// Per-writer mean of the per-sample embedding gradients in one batch:
/// gradient for writer w is the sum over w's samples divided by w's sample
/// count. Writers absent from the batch are absent from the result.
pub fn normalize_embedding_gradients(
    batch_wsi: &[usize],
    raw_grads: &[Array1<f32>],
) -> BTreeMap<usize, Array1<f32>> {
    assert_eq!(batch_wsi.len(), raw_grads.len());
    let mut sums: BTreeMap<usize, (Array1<f32>, usize)> = BTreeMap::new();
    for (&wsi, g) in batch_wsi.iter().zip(raw_grads.iter()) {
        match sums.get_mut(&wsi) {
            Some((acc, count)) => {
                acc.zip_mut_with(g, |a, &b| *a += b);
                *count += 1;
            }
            None => {
                sums.insert(wsi, (g.clone(), 1));
            }
        }
    }
    sums.into_iter()
        .map(|(wsi, (sum, count))| (wsi, sum / count as f32))
        .collect()
}

/// Sparse per-row Adam for the embedding table. Rows keep independent moment
/// estimates and step counters, so rows absent from a batch are untouched
/// bit-for-bit.
pub struct EmbeddingAdam {
    hp: crate::nn::optim::AdamParams,
    m: Array2<f32>,
    v: Array2<f32>,
    t: Vec<u64>,
}

impl EmbeddingAdam {
    pub fn new(table: &EmbeddingTable, hp: crate::nn::optim::AdamParams) -> Self {
        EmbeddingAdam {
            hp,
            m: Array2::zeros((table.n_writers(), table.ed())),
            v: Array2::zeros((table.n_writers(), table.ed())),
            t: vec![0; table.n_writers()],
        }
    }

    pub fn step(
        &mut self,
        table: &mut EmbeddingTable,
        writer_grads: &BTreeMap<usize, Array1<f32>>,
        lr: f32,
    ) {
        for (&wsi, g) in writer_grads.iter() {
            self.t[wsi] += 1;
            let bc1 = 1.0 - self.hp.beta1.powi(self.t[wsi] as i32);
            let bc2 = 1.0 - self.hp.beta2.powi(self.t[wsi] as i32);
            let mut row = table.rows.row_mut(wsi);
            for j in 0..g.len() {
                let gv = g[j];
                let mv = &mut self.m[[wsi, j]];
                *mv = self.hp.beta1 * *mv + (1.0 - self.hp.beta1) * gv;
                let vv = &mut self.v[[wsi, j]];
                *vv = self.hp.beta2 * *vv + (1.0 - self.hp.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                row[j] -= lr * mhat / (vhat.sqrt() + self.hp.eps);
            }
        }
    }
}
