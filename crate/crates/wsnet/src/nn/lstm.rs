//! LSTM layers with explicit backpropagation through time.

use super::param::{GradStore, ParamId, ParamStore};
use ndarray::{s, Array1, Array2};
use rand::Rng;

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-direction LSTM. Gate layout along the 4H axis: input, forget,
/// cell candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_x: ParamId, // [I, 4H]
    pub w_h: ParamId, // [H, 4H]
    pub bias: ParamId, // [4H]
    pub d_in: usize,
    pub hidden: usize,
}

pub struct LstmCtx {
    x: Array2<f32>,
    gates: Array2<f32>, // [T, 4H] post-activation (i, f, g, o)
    cells: Array2<f32>, // [T+1, H], cells[0] = 0
    hiddens: Array2<f32>, // [T+1, H], hiddens[0] = 0
}

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f32).sqrt();
        let w_x = Array2::from_shape_fn((d_in, 4 * hidden), |_| rng.random_range(-bound..bound));
        let w_h = Array2::from_shape_fn((hidden, 4 * hidden), |_| rng.random_range(-bound..bound));
        Lstm {
            w_x: store.register(format!("{name}.w_x"), w_x.into_dyn()),
            w_h: store.register(format!("{name}.w_h"), w_h.into_dyn()),
            bias: store.register(
                format!("{name}.bias"),
                Array1::<f32>::zeros(4 * hidden).into_dyn(),
            ),
            d_in,
            hidden,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, LstmCtx) {
        let (t_len, d) = x.dim();
        assert_eq!(d, self.d_in);
        let h = self.hidden;
        let w_x: ndarray::ArrayView2<f32> = store.get(self.w_x).view().into_dimensionality().unwrap();
        let w_h: ndarray::ArrayView2<f32> = store.get(self.w_h).view().into_dimensionality().unwrap();
        let bias = store.get(self.bias);

        // Input projection for every timestep in one matmul.
        let xw = x.dot(&w_x); // [T, 4H]

        let mut gates = Array2::<f32>::zeros((t_len, 4 * h));
        let mut cells = Array2::<f32>::zeros((t_len + 1, h));
        let mut hiddens = Array2::<f32>::zeros((t_len + 1, h));

        for t in 0..t_len {
            let h_prev = hiddens.row(t).to_owned();
            let hw = h_prev.dot(&w_h); // [4H]
            let mut z = xw.row(t).to_owned();
            z += &hw;
            for j in 0..4 * h {
                z[j] += bias[[j]];
            }
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let g_g = z[2 * h + j].tanh();
                let o_g = sigmoid(z[3 * h + j]);
                let c = f_g * cells[[t, j]] + i_g * g_g;
                gates[[t, j]] = i_g;
                gates[[t, h + j]] = f_g;
                gates[[t, 2 * h + j]] = g_g;
                gates[[t, 3 * h + j]] = o_g;
                cells[[t + 1, j]] = c;
                hiddens[[t + 1, j]] = o_g * c.tanh();
            }
        }

        let out = hiddens.slice(s![1.., ..]).to_owned();
        (
            out,
            LstmCtx {
                x: x.clone(),
                gates,
                cells,
                hiddens,
            },
        )
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &LstmCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let (t_len, _) = ctx.x.dim();
        let h = self.hidden;
        let w_h: ndarray::ArrayView2<f32> = store.get(self.w_h).view().into_dimensionality().unwrap();

        let mut dz_all = Array2::<f32>::zeros((t_len, 4 * h));
        let mut dh_next = Array1::<f32>::zeros(h);
        let mut dc_next = Array1::<f32>::zeros(h);

        for t in (0..t_len).rev() {
            let mut dz = Array1::<f32>::zeros(4 * h);
            for j in 0..h {
                let i_g = ctx.gates[[t, j]];
                let f_g = ctx.gates[[t, h + j]];
                let g_g = ctx.gates[[t, 2 * h + j]];
                let o_g = ctx.gates[[t, 3 * h + j]];
                let c = ctx.cells[[t + 1, j]];
                let c_prev = ctx.cells[[t, j]];
                let tanh_c = c.tanh();

                let dh = grad_out[[t, j]] + dh_next[j];
                let do_g = dh * tanh_c;
                let dc = dc_next[j] + dh * o_g * (1.0 - tanh_c * tanh_c);

                let di = dc * g_g;
                let df = dc * c_prev;
                let dg = dc * i_g;

                dz[j] = di * i_g * (1.0 - i_g);
                dz[h + j] = df * f_g * (1.0 - f_g);
                dz[2 * h + j] = dg * (1.0 - g_g * g_g);
                dz[3 * h + j] = do_g * o_g * (1.0 - o_g);

                dc_next[j] = dc * f_g;
            }
            dh_next = dz.dot(&w_h.t());
            dz_all.row_mut(t).assign(&dz);
        }

        // Batched parameter gradients.
        let dwx = ctx.x.t().dot(&dz_all);
        grads
            .get_mut(self.w_x)
            .zip_mut_with(&dwx.into_dyn(), |a, &b| *a += b);
        let h_prev = ctx.hiddens.slice(s![..t_len, ..]);
        let dwh = h_prev.t().dot(&dz_all);
        grads
            .get_mut(self.w_h)
            .zip_mut_with(&dwh.into_dyn(), |a, &b| *a += b);
        for t in 0..t_len {
            for j in 0..4 * h {
                grads.get_mut(self.bias)[[j]] += dz_all[[t, j]];
            }
        }

        let w_x: ndarray::ArrayView2<f32> = store.get(self.w_x).view().into_dimensionality().unwrap();
        dz_all.dot(&w_x.t())
    }
}

/// Bidirectional LSTM: forward and reversed passes concatenated to [T, 2H].
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

pub struct BiLstmCtx {
    fwd: LstmCtx,
    bwd: LstmCtx,
}

fn reverse_rows(x: &Array2<f32>) -> Array2<f32> {
    let mut r = x.clone();
    let t = x.nrows();
    for i in 0..t {
        r.row_mut(i).assign(&x.row(t - 1 - i));
    }
    r
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), d_in, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), d_in, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f32>) -> (Array2<f32>, BiLstmCtx) {
        let (yf, cf) = self.fwd.forward(store, x);
        let x_rev = reverse_rows(x);
        let (yb_rev, cb) = self.bwd.forward(store, &x_rev);
        let yb = reverse_rows(&yb_rev);
        let t = x.nrows();
        let h = self.fwd.hidden;
        let mut out = Array2::<f32>::zeros((t, 2 * h));
        out.slice_mut(s![.., ..h]).assign(&yf);
        out.slice_mut(s![.., h..]).assign(&yb);
        (out, BiLstmCtx { fwd: cf, bwd: cb })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &BiLstmCtx,
        grad_out: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Array2<f32> {
        let h = self.fwd.hidden;
        let gf = grad_out.slice(s![.., ..h]).to_owned();
        let gb = reverse_rows(&grad_out.slice(s![.., h..]).to_owned());
        let dxf = self.fwd.backward(store, &ctx.fwd, &gf, grads);
        let dxb_rev = self.bwd.backward(store, &ctx.bwd, &gb, grads);
        let dxb = reverse_rows(&dxb_rev);
        dxf + dxb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "l", 3, 4, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |(t, j)| ((t * 5 + j) as f32 * 0.31).sin());
        let coef = Array2::from_shape_fn((5, 4), |(t, j)| ((t * 3 + j * 7) as f32 * 0.17).cos());

        let loss = |s: &ParamStore| -> f64 {
            let (y, _) = lstm.forward(s, &x);
            y.iter().zip(coef.iter()).map(|(&v, &c)| v as f64 * c as f64).sum()
        };
        let (_, ctx) = lstm.forward(&store, &x);
        let mut grads = store.zero_grads();
        let dx = lstm.backward(&store, &ctx, &coef, &mut grads);

        gradcheck::check_all_params(&mut store, &grads, 8, 1e-2, 2e-2, loss);

        // input gradient
        let mut x2 = x.clone();
        for idx in [(0usize, 0usize), (2, 1), (4, 2)] {
            let orig = x2[idx];
            let h = 1e-2f32;
            x2[idx] = orig + h;
            let (yp, _) = lstm.forward(&store, &x2);
            let lp: f64 = yp.iter().zip(coef.iter()).map(|(&v, &c)| v as f64 * c as f64).sum();
            x2[idx] = orig - h;
            let (ym, _) = lstm.forward(&store, &x2);
            let lm: f64 = ym.iter().zip(coef.iter()).map(|(&v, &c)| v as f64 * c as f64).sum();
            x2[idx] = orig;
            let fd = (lp - lm) / (2.0 * h as f64);
            let err = gradcheck::rel_err(dx[idx] as f64, fd);
            assert!(err < 2e-2, "dx[{idx:?}] analytic {} fd {fd} err {err}", dx[idx]);
        }
    }

    #[test]
    fn bilstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "bl", 3, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(t, j)| ((t * 7 + j * 3) as f32 * 0.23).sin());
        let coef = Array2::from_shape_fn((4, 4), |(t, j)| ((t + j * 5) as f32 * 0.41).cos());

        let loss = |s: &ParamStore| -> f64 {
            let (y, _) = lstm.forward(s, &x);
            y.iter().zip(coef.iter()).map(|(&v, &c)| v as f64 * c as f64).sum()
        };
        let (_, ctx) = lstm.forward(&store, &x);
        let mut grads = store.zero_grads();
        let _ = lstm.backward(&store, &ctx, &coef, &mut grads);
        gradcheck::check_all_params(&mut store, &grads, 8, 1e-2, 2e-2, loss);
    }

    #[test]
    fn bilstm_output_concatenates_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "bl", 2, 3, &mut rng);
        let x = Array2::from_shape_fn((6, 2), |(t, j)| (t + j) as f32 * 0.1);
        let (y, _) = lstm.forward(&store, &x);
        assert_eq!(y.dim(), (6, 6));
        assert_eq!(lstm.out_dim(), 6);
    }
}
