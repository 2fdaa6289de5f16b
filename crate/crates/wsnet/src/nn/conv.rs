//! 2-D and 1-D convolutions via im2col + matmul.
//!
//! Feature maps are per-sample `[C, H, W]`; sequences are `[T, F]`. Padding is
//! "same": output spatial size is `ceil(input / stride)` on each padded axis,
//! which pins the recognizer's frame-count rule T = ceil(width / 4).

use super::param::{GradStore, ParamId, ParamStore};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

pub struct Conv2dCtx {
    cols: Array2<f32>,
    in_dims: (usize, usize, usize),
    out_hw: (usize, usize),
}

fn same_pad(input: usize, kernel: usize, stride: usize) -> (usize, usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    let begin = total / 2;
    (out, begin, total - begin)
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (c_in * kernel.0 * kernel.1) as f32;
        let bound = (1.0 / fan_in).sqrt();
        let w = Array2::from_shape_fn((c_out, c_in * kernel.0 * kernel.1), |_| {
            rng.random_range(-bound..bound)
        });
        let b = Array1::<f32>::zeros(c_out);
        Conv2d {
            weight: store.register(format!("{name}.weight"), w.into_dyn()),
            bias: store.register(format!("{name}.bias"), b.into_dyn()),
            c_in,
            c_out,
            kernel,
            stride,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride.0), w.div_ceil(self.stride.1))
    }

    pub fn forward(&self, store: &ParamStore, x: &Array3<f32>) -> (Array3<f32>, Conv2dCtx) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.c_in, "conv input channels");
        let (kh, kw) = self.kernel;
        let (h_out, pad_top, _) = same_pad(h, kh, self.stride.0);
        let (w_out, pad_left, _) = same_pad(w, kw, self.stride.1);

        let mut cols = Array2::<f32>::zeros((c * kh * kw, h_out * w_out));
        for ci in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ci * kh + ki) * kw + kj;
                    for ho in 0..h_out {
                        let hi = (ho * self.stride.0 + ki) as isize - pad_top as isize;
                        if hi < 0 || hi as usize >= h {
                            continue;
                        }
                        for wo in 0..w_out {
                            let wi = (wo * self.stride.1 + kj) as isize - pad_left as isize;
                            if wi < 0 || wi as usize >= w {
                                continue;
                            }
                            cols[[row, ho * w_out + wo]] = x[[ci, hi as usize, wi as usize]];
                        }
                    }
                }
            }
        }

        let wmat = store.get(self.weight).view().into_dimensionality().unwrap();
        let wmat: ndarray::ArrayView2<f32> = wmat;
        let bias = store.get(self.bias);
        let mut out_flat = wmat.dot(&cols);
        for (co, mut row) in out_flat.rows_mut().into_iter().enumerate() {
            let b = bias[[co]];
            row.mapv_inplace(|v| v + b);
        }
        let out = out_flat
            .into_shape_with_order((self.c_out, h_out, w_out))
            .unwrap();
        (
            out,
            Conv2dCtx {
                cols,
                in_dims: (c, h, w),
                out_hw: (h_out, w_out),
            },
        )
    }

    /// Returns the gradient with respect to the input and accumulates weight
    /// and bias gradients into `grads`.
    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &Conv2dCtx,
        grad_out: &Array3<f32>,
        grads: &mut GradStore,
    ) -> Array3<f32> {
        let (h_out, w_out) = ctx.out_hw;
        let g_flat = grad_out
            .view()
            .into_shape_with_order((self.c_out, h_out * w_out))
            .unwrap();

        let dw = g_flat.dot(&ctx.cols.t());
        grads
            .get_mut(self.weight)
            .zip_mut_with(&dw.into_dyn(), |a, &b| *a += b);
        for (co, row) in g_flat.rows().into_iter().enumerate() {
            grads.get_mut(self.bias)[[co]] += row.sum();
        }

        let wmat: ndarray::ArrayView2<f32> =
            store.get(self.weight).view().into_dimensionality().unwrap();
        let dcols = wmat.t().dot(&g_flat);

        // col2im
        let (c, h, w) = ctx.in_dims;
        let (kh, kw) = self.kernel;
        let (_, pad_top, _) = same_pad(h, kh, self.stride.0);
        let (_, pad_left, _) = same_pad(w, kw, self.stride.1);
        let mut dx = Array3::<f32>::zeros((c, h, w));
        for ci in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ci * kh + ki) * kw + kj;
                    for ho in 0..h_out {
                        let hi = (ho * self.stride.0 + ki) as isize - pad_top as isize;
                        if hi < 0 || hi as usize >= h {
                            continue;
                        }
                        for wo in 0..w_out {
                            let wi = (wo * self.stride.1 + kj) as isize - pad_left as isize;
                            if wi < 0 || wi as usize >= w {
                                continue;
                            }
                            dx[[ci, hi as usize, wi as usize]] += dcols[[row, ho * w_out + wo]];
                        }
                    }
                }
            }
        }
        dx
    }
}

/// 1-D convolution over a [T, F] sequence (used by the recognizer head).
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

pub struct Conv1dCtx {
    cols: Array2<f32>,
    t_in: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = (1.0 / (c_in * kernel) as f32).sqrt();
        let w = Array2::from_shape_fn((c_out, c_in * kernel), |_| rng.random_range(-bound..bound));
        Conv1d {
            weight: store.register(format!("{name}.weight"), w.into_dyn()),
            bias: store.register(format!("{name}.bias"), Array1::<f32>::zeros(c_out).into_dyn()),
            c_in,
            c_out,
            kernel,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, Conv1dCtx) {
        let (t, f) = x.dim();
        assert_eq!(f, self.c_in);
        let pad = (self.kernel - 1) / 2;
        let mut cols = Array2::<f32>::zeros((self.c_in * self.kernel, t));
        for fi in 0..f {
            for k in 0..self.kernel {
                let row = fi * self.kernel + k;
                for to in 0..t {
                    let ti = to as isize + k as isize - pad as isize;
                    if ti >= 0 && (ti as usize) < t {
                        cols[[row, to]] = x[[ti as usize, fi]];
                    }
                }
            }
        }
        let wmat: ndarray::ArrayView2<f32> =
            store.get(self.weight).view().into_dimensionality().unwrap();
        let bias = store.get(self.bias);
        let mut out = wmat.dot(&cols); // [c_out, T]
        for (co, mut row) in out.rows_mut().into_iter().enumerate() {
            let b = bias[[co]];
            row.mapv_inplace(|v| v + b);
        }
        (out.t().to_owned(), Conv1dCtx { cols, t_in: t })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &Conv1dCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let g = grad_out.t().to_owned(); // [c_out, T]
        let dw = g.dot(&ctx.cols.t());
        grads
            .get_mut(self.weight)
            .zip_mut_with(&dw.into_dyn(), |a, &b| *a += b);
        for (co, row) in g.rows().into_iter().enumerate() {
            grads.get_mut(self.bias)[[co]] += row.sum();
        }
        let wmat: ndarray::ArrayView2<f32> =
            store.get(self.weight).view().into_dimensionality().unwrap();
        let dcols = wmat.t().dot(&g);
        let pad = (self.kernel - 1) / 2;
        let t = ctx.t_in;
        let mut dx = Array2::<f32>::zeros((t, self.c_in));
        for fi in 0..self.c_in {
            for k in 0..self.kernel {
                let row = fi * self.kernel + k;
                for to in 0..t {
                    let ti = to as isize + k as isize - pad as isize;
                    if ti >= 0 && (ti as usize) < t {
                        dx[[ti as usize, fi]] += dcols[[row, to]];
                    }
                }
            }
        }
        dx
    }
}

/// Height-halving max pool on a [C, H, W] map. H must be even.
pub fn hpool2_forward(x: &Array3<f32>) -> (Array3<f32>, Array3<u8>) {
    let (c, h, w) = x.dim();
    assert!(h % 2 == 0, "height pool requires even height, got {h}");
    let mut out = Array3::<f32>::zeros((c, h / 2, w));
    let mut arg = Array3::<u8>::zeros((c, h / 2, w));
    for ci in 0..c {
        for ho in 0..h / 2 {
            for wi in 0..w {
                let a = x[[ci, 2 * ho, wi]];
                let b = x[[ci, 2 * ho + 1, wi]];
                if b > a {
                    out[[ci, ho, wi]] = b;
                    arg[[ci, ho, wi]] = 1;
                } else {
                    out[[ci, ho, wi]] = a;
                }
            }
        }
    }
    (out, arg)
}

pub fn hpool2_backward(grad_out: &Array3<f32>, arg: &Array3<u8>) -> Array3<f32> {
    let (c, ho2, w) = grad_out.dim();
    let mut dx = Array3::<f32>::zeros((c, ho2 * 2, w));
    for ci in 0..c {
        for ho in 0..ho2 {
            for wi in 0..w {
                dx[[ci, 2 * ho + arg[[ci, ho, wi]] as usize, wi]] = grad_out[[ci, ho, wi]];
            }
        }
    }
    dx
}

/// Linear layer y = x W + b on [T, F] rows.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId, // [in, out]
    pub bias: ParamId,   // [out]
    pub d_in: usize,
    pub d_out: usize,
}

pub struct LinearCtx {
    x: Array2<f32>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = (6.0 / (d_in + d_out) as f32).sqrt();
        let w = Array2::from_shape_fn((d_in, d_out), |_| rng.random_range(-bound..bound));
        Linear {
            weight: store.register(format!("{name}.weight"), w.into_dyn()),
            bias: store.register(format!("{name}.bias"), Array1::<f32>::zeros(d_out).into_dyn()),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, LinearCtx) {
        let w: ndarray::ArrayView2<f32> =
            store.get(self.weight).view().into_dimensionality().unwrap();
        let b = store.get(self.bias);
        let mut y = x.dot(&w);
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += b[[j]];
            }
        }
        (y, LinearCtx { x: x.clone() })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &LinearCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let dw = ctx.x.t().dot(grad_out);
        grads
            .get_mut(self.weight)
            .zip_mut_with(&dw.into_dyn(), |a, &b| *a += b);
        for row in grad_out.rows() {
            for (j, v) in row.iter().enumerate() {
                grads.get_mut(self.bias)[[j]] += v;
            }
        }
        let w: ndarray::ArrayView2<f32> =
            store.get(self.weight).view().into_dimensionality().unwrap();
        grad_out.dot(&w.t())
    }
}
