//! Channel-wise normalization primitives.
//!
//! The instance-norm core normalizes each channel over its spatial extent
//! with the population standard deviation and an epsilon added to sigma
//! itself (not to the variance): y = gamma * (x - mu) / (sigma + eps) + beta.
//! Both the plain and the embedding-conditioned normalization layers route
//! through the same function, so a conditioned layer with zeroed projections
//! is bit-identical to a plain one.

use super::param::{GradStore, ParamId, ParamStore};
use ndarray::{Array1, Array2};

/// Forward context for the shared normalization core.
pub struct NormCtx {
    pub xhat: Array2<f32>,   // normalized input, [C, N]
    pub sigma: Array1<f32>,  // per-channel population std
    pub gamma: Array1<f32>,  // scales actually applied
}

/// Normalize rows of a [C, N] array: channel c over its N spatial positions.
pub fn channel_norm_forward(
    x: &Array2<f32>,
    gamma: &Array1<f32>,
    beta: &Array1<f32>,
    eps: f32,
) -> (Array2<f32>, NormCtx) {
    let (c, n) = x.dim();
    assert_eq!(gamma.len(), c);
    assert_eq!(beta.len(), c);
    let mut xhat = Array2::<f32>::zeros((c, n));
    let mut sigma = Array1::<f32>::zeros(c);
    let mut y = Array2::<f32>::zeros((c, n));
    for ci in 0..c {
        let row = x.row(ci);
        let mu = row.sum() / n as f32;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f32>() / n as f32;
        let s = var.sqrt();
        sigma[ci] = s;
        let denom = s + eps;
        for j in 0..n {
            let xh = (row[j] - mu) / denom;
            xhat[[ci, j]] = xh;
            y[[ci, j]] = gamma[ci] * xh + beta[ci];
        }
    }
    (
        y,
        NormCtx {
            xhat,
            sigma,
            gamma: gamma.clone(),
        },
    )
}

/// Backward for the shared core. Returns (dx, dgamma, dbeta).
pub fn channel_norm_backward(
    ctx: &NormCtx,
    grad_out: &Array2<f32>,
    eps: f32,
) -> (Array2<f32>, Array1<f32>, Array1<f32>) {
    let (c, n) = ctx.xhat.dim();
    let mut dx = Array2::<f32>::zeros((c, n));
    let mut dgamma = Array1::<f32>::zeros(c);
    let mut dbeta = Array1::<f32>::zeros(c);
    for ci in 0..c {
        let g = grad_out.row(ci);
        let xh = ctx.xhat.row(ci);
        let s = ctx.sigma[ci];
        let denom = s + eps;

        let mut sum_g = 0.0f32;
        let mut sum_gx = 0.0f32;
        for j in 0..n {
            sum_g += g[j];
            sum_gx += g[j] * xh[j];
        }
        dgamma[ci] = sum_gx;
        dbeta[ci] = sum_g;

        let gm = ctx.gamma[ci];
        let mean_gh = gm * sum_g / n as f32;
        let mean_gxh = gm * sum_gx / n as f32;
        // sigma term vanishes in the subgradient for a constant channel
        let inv_s = if s > 1e-12 { 1.0 / s } else { 0.0 };
        for j in 0..n {
            let gh = gm * g[j];
            dx[[ci, j]] = (gh - mean_gh) / denom - xh[j] * mean_gxh * inv_s;
        }
    }
    (dx, dgamma, dbeta)
}

/// Plain instance normalization with a learnable per-channel affine,
/// initialized to identity (gamma = 1, beta = 0).
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub eps: f32,
}

impl InstanceNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, eps: f32) -> Self {
        InstanceNorm {
            gamma: store.register(
                format!("{name}.gamma"),
                Array1::<f32>::ones(channels).into_dyn(),
            ),
            beta: store.register(
                format!("{name}.beta"),
                Array1::<f32>::zeros(channels).into_dyn(),
            ),
            channels,
            eps,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, NormCtx) {
        let gamma: Array1<f32> = store
            .get(self.gamma)
            .view()
            .into_dimensionality()
            .unwrap()
            .to_owned();
        let beta: Array1<f32> = store
            .get(self.beta)
            .view()
            .into_dimensionality()
            .unwrap()
            .to_owned();
        channel_norm_forward(x, &gamma, &beta, self.eps)
    }

    pub fn backward(
        &self,
        ctx: &NormCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let (dx, dgamma, dbeta) = channel_norm_backward(ctx, grad_out, self.eps);
        for ci in 0..self.channels {
            grads.get_mut(self.gamma)[[ci]] += dgamma[ci];
            grads.get_mut(self.beta)[[ci]] += dbeta[ci];
        }
        dx
    }
}

/// Layer normalization over the feature axis of a [T, F] sequence.
/// Uses sqrt(var + eps); only the style encoder's attention blocks use it.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub features: usize,
    pub eps: f32,
}

pub struct LayerNormCtx {
    xhat: Array2<f32>,
    inv_std: Array1<f32>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, features: usize, eps: f32) -> Self {
        LayerNorm {
            gamma: store.register(
                format!("{name}.gamma"),
                Array1::<f32>::ones(features).into_dyn(),
            ),
            beta: store.register(
                format!("{name}.beta"),
                Array1::<f32>::zeros(features).into_dyn(),
            ),
            features,
            eps,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, LayerNormCtx) {
        let (t, f) = x.dim();
        assert_eq!(f, self.features);
        let gamma = store.get(self.gamma);
        let beta = store.get(self.beta);
        let mut y = Array2::<f32>::zeros((t, f));
        let mut xhat = Array2::<f32>::zeros((t, f));
        let mut inv_std = Array1::<f32>::zeros(t);
        for ti in 0..t {
            let row = x.row(ti);
            let mu = row.sum() / f as f32;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f32>() / f as f32;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ti] = istd;
            for j in 0..f {
                let xh = (row[j] - mu) * istd;
                xhat[[ti, j]] = xh;
                y[[ti, j]] = gamma[[j]] * xh + beta[[j]];
            }
        }
        (y, LayerNormCtx { xhat, inv_std })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &LayerNormCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let (t, f) = ctx.xhat.dim();
        let gamma = store.get(self.gamma);
        let mut dx = Array2::<f32>::zeros((t, f));
        for ti in 0..t {
            let mut sum_gh = 0.0f32;
            let mut sum_ghx = 0.0f32;
            for j in 0..f {
                let gh = grad_out[[ti, j]] * gamma[[j]];
                sum_gh += gh;
                sum_ghx += gh * ctx.xhat[[ti, j]];
                grads.get_mut(self.gamma)[[j]] += grad_out[[ti, j]] * ctx.xhat[[ti, j]];
                grads.get_mut(self.beta)[[j]] += grad_out[[ti, j]];
            }
            let istd = ctx.inv_std[ti];
            for j in 0..f {
                let gh = grad_out[[ti, j]] * gamma[[j]];
                dx[[ti, j]] =
                    istd * (gh - sum_gh / f as f32 - ctx.xhat[[ti, j]] * sum_ghx / f as f32);
            }
        }
        dx
    }
}
