//! Multi-head self-attention blocks for the style encoder.

use super::conv::{Linear, LinearCtx};
use super::norm::{LayerNorm, LayerNormCtx};
use super::param::{GradStore, ParamStore};
use super::{relu, relu_backward};
use ndarray::{s, Array2};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct MhaCtx {
    q_ctx: LinearCtx,
    k_ctx: LinearCtx,
    v_ctx: LinearCtx,
    o_ctx: LinearCtx,
    q: Array2<f32>,
    k: Array2<f32>,
    v: Array2<f32>,
    attn: Vec<Array2<f32>>, // per head, [T, T]
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dim % heads == 0, "attention dim must divide into heads");
        MultiHeadAttention {
            wq: Linear::new(store, &format!("{name}.wq"), dim, dim, rng),
            wk: Linear::new(store, &format!("{name}.wk"), dim, dim, rng),
            wv: Linear::new(store, &format!("{name}.wv"), dim, dim, rng),
            wo: Linear::new(store, &format!("{name}.wo"), dim, dim, rng),
            heads,
            dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, MhaCtx) {
        let t = x.nrows();
        let dk = self.dim / self.heads;
        let scale = 1.0 / (dk as f32).sqrt();
        let (q, q_ctx) = self.wq.forward(store, x);
        let (k, k_ctx) = self.wk.forward(store, x);
        let (v, v_ctx) = self.wv.forward(store, x);

        let mut concat = Array2::<f32>::zeros((t, self.dim));
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|v| v * scale);
            // row softmax
            for mut row in scores.rows_mut() {
                let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
            let oh = scores.dot(&vh);
            concat.slice_mut(cols).assign(&oh);
            attn.push(scores);
        }
        let (out, o_ctx) = self.wo.forward(store, &concat);
        (
            out,
            MhaCtx {
                q_ctx,
                k_ctx,
                v_ctx,
                o_ctx,
                q,
                k,
                v,
                attn,
            },
        )
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &MhaCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let t = grad_out.nrows();
        let dk = self.dim / self.heads;
        let scale = 1.0 / (dk as f32).sqrt();

        let dconcat = self.wo.backward(store, &ctx.o_ctx, grad_out, grads);

        let mut dq = Array2::<f32>::zeros((t, self.dim));
        let mut dkm = Array2::<f32>::zeros((t, self.dim));
        let mut dv = Array2::<f32>::zeros((t, self.dim));
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let a = &ctx.attn[h];
            let doh = dconcat.slice(cols);
            let vh = ctx.v.slice(cols);
            let qh = ctx.q.slice(cols);
            let kh = ctx.k.slice(cols);

            let da = doh.dot(&vh.t()); // [T, T]
            dv.slice_mut(cols).assign(&a.t().dot(&doh));

            // softmax backward per row
            let mut ds = Array2::<f32>::zeros((t, t));
            for i in 0..t {
                let arow = a.row(i);
                let darow = da.row(i);
                let dot: f32 = arow.iter().zip(darow.iter()).map(|(&x, &y)| x * y).sum();
                for j in 0..t {
                    ds[[i, j]] = arow[j] * (darow[j] - dot);
                }
            }
            ds.mapv_inplace(|v| v * scale);
            dq.slice_mut(cols).assign(&ds.dot(&kh));
            dkm.slice_mut(cols).assign(&ds.t().dot(&qh));
        }

        let dx_q = self.wq.backward(store, &ctx.q_ctx, &dq, grads);
        let dx_k = self.wk.backward(store, &ctx.k_ctx, &dkm, grads);
        let dx_v = self.wv.backward(store, &ctx.v_ctx, &dv, grads);
        dx_q + dx_k + dx_v
    }
}

/// Pre-norm residual block: x + MHA(LN(x)) followed by x + FFN(LN(x)).
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub ln1: LayerNorm,
    pub mha: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

pub struct AttentionBlockCtx {
    ln1: LayerNormCtx,
    mha: MhaCtx,
    ln2: LayerNormCtx,
    ff1: LinearCtx,
    ff2: LinearCtx,
    ff_act: Array2<f32>,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ff_mult: usize,
        rng: &mut impl Rng,
    ) -> Self {
        AttentionBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim, 1e-5),
            mha: MultiHeadAttention::new(store, &format!("{name}.mha"), dim, heads, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim, 1e-5),
            ff1: Linear::new(store, &format!("{name}.ff1"), dim, dim * ff_mult, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), dim * ff_mult, dim, rng),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, AttentionBlockCtx) {
        let (n1, ln1) = self.ln1.forward(store, x);
        let (a, mha) = self.mha.forward(store, &n1);
        let mid = x + &a;
        let (n2, ln2) = self.ln2.forward(store, &mid);
        let (f1, ff1) = self.ff1.forward(store, &n2);
        let act = relu(&f1);
        let (f2, ff2) = self.ff2.forward(store, &act);
        let out = &mid + &f2;
        (
            out,
            AttentionBlockCtx {
                ln1,
                mha,
                ln2,
                ff1,
                ff2,
                ff_act: act,
            },
        )
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &AttentionBlockCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let dff2 = self.ff2.backward(store, &ctx.ff2, grad_out, grads);
        let dact = relu_backward(&dff2, &ctx.ff_act);
        let dn2 = self.ff1.backward(store, &ctx.ff1, &dact, grads);
        let dmid = grad_out + &self.ln2.backward(store, &ctx.ln2, &dn2, grads);
        let dn1 = self.mha.backward(store, &ctx.mha, &dmid, grads);
        &dmid + &self.ln1.backward(store, &ctx.ln1, &dn1, grads)
    }
}

/// Fixed sinusoidal position signal added over the sequence axis.
pub fn add_positional(x: &mut Array2<f32>) {
    let (t, d) = x.dim();
    for ti in 0..t {
        for j in 0..d {
            let freq = 1.0f32 / 10000f32.powf((2 * (j / 2)) as f32 / d as f32);
            let angle = ti as f32 * freq;
            x[[ti, j]] += if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
}
