//! Minimal neural-network toolkit: explicit forward/backward layers over
//! `ndarray` f32 tensors, a named parameter store, and the two optimizers the
//! training schedules need.
//!
//! Layers are stateless descriptions holding parameter ids; activations and
//! per-sample backward context live on the caller's stack so batches can run
//! data-parallel over samples while parameters stay shared.

pub mod attention;
pub mod conv;
pub mod init;
pub mod lstm;
pub mod norm;
pub mod optim;
pub mod param;

pub use param::{GradStore, ParamId, ParamStore};

use ndarray::{Array1, Array2};

/// Row-major sequence of feature vectors, shape [T, F].
pub type Seq = Array2<f32>;

/// ReLU forward, returns output; mask for backward is the output itself.
pub fn relu(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(|v| v.max(0.0))
}

/// ReLU backward: zero where the forward output was zero.
pub fn relu_backward(grad_out: &Array2<f32>, fwd_out: &Array2<f32>) -> Array2<f32> {
    let mut g = grad_out.clone();
    g.zip_mut_with(fwd_out, |gv, &yv| {
        if yv <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

/// Log-softmax over the last axis of a [T, K] array, computed in f64.
pub fn log_softmax_f64(logits: &Array2<f32>) -> Array2<f64> {
    let (t, k) = logits.dim();
    let mut out = Array2::<f64>::zeros((t, k));
    for ti in 0..t {
        let row = logits.row(ti);
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut z = 0.0f64;
        for ki in 0..k {
            z += ((row[ki] as f64) - m).exp();
        }
        let lz = m + z.ln();
        for ki in 0..k {
            out[[ti, ki]] = row[ki] as f64 - lz;
        }
    }
    out
}

/// Average-pool a [T, F] sequence along T by `factor`; trailing partial
/// windows average over the frames they actually cover.
pub fn seq_avg_pool(x: &Seq, factor: usize) -> Seq {
    assert!(factor >= 1);
    let (t, f) = x.dim();
    let t_out = t.div_ceil(factor);
    let mut out = Array2::<f32>::zeros((t_out, f));
    for to in 0..t_out {
        let lo = to * factor;
        let hi = ((to + 1) * factor).min(t);
        let n = (hi - lo) as f32;
        for ti in lo..hi {
            let row = x.row(ti);
            let mut acc = out.row_mut(to);
            acc.zip_mut_with(&row, |a, &b| *a += b / n);
        }
    }
    out
}

pub fn seq_avg_pool_backward(grad_out: &Seq, t_in: usize, factor: usize) -> Seq {
    let (t_out, f) = grad_out.dim();
    let mut g = Array2::<f32>::zeros((t_in, f));
    for to in 0..t_out {
        let lo = to * factor;
        let hi = ((to + 1) * factor).min(t_in);
        let n = (hi - lo) as f32;
        for ti in lo..hi {
            let src = grad_out.row(to);
            let mut dst = g.row_mut(ti);
            dst.zip_mut_with(&src, |a, &b| *a += b / n);
        }
    }
    g
}

/// Nearest-neighbor upsample of a pooled sequence back to length `t_out`:
/// output frame t copies input frame t / factor.
pub fn seq_repeat_upsample(x: &Seq, factor: usize, t_out: usize) -> Seq {
    let (_t_in, f) = x.dim();
    let mut out = Array2::<f32>::zeros((t_out, f));
    for t in 0..t_out {
        out.row_mut(t).assign(&x.row(t / factor));
    }
    out
}

pub fn seq_repeat_upsample_backward(grad_out: &Seq, t_in: usize, factor: usize) -> Seq {
    let (t_out, f) = grad_out.dim();
    let mut g = Array2::<f32>::zeros((t_in, f));
    for t in 0..t_out {
        let src = grad_out.row(t);
        let mut dst = g.row_mut(t / factor);
        dst.zip_mut_with(&src, |a, &b| *a += b);
    }
    g
}

/// L2-normalize a vector in place; returns the pre-normalization norm.
pub fn l2_normalize(v: &mut Array1<f32>) -> f32 {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt() as f32;
    if n > 0.0 {
        v.mapv_inplace(|x| x / n);
    }
    n
}

#[cfg(test)]
pub(crate) mod gradcheck;
