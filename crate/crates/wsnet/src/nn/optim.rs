//! Adam and AdamW over a parameter store.

use super::param::{GradStore, ParamId, ParamStore};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

/// First/second-moment decay and epsilon. Exposed in the experiment config
/// rather than hard-coded; the defaults are the usual published ones.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamParams {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Decoupled weight decay; 0 gives plain Adam.
    pub weight_decay: f32,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

pub struct Adam {
    pub hp: AdamParams,
    m: Vec<ArrayD<f32>>,
    v: Vec<ArrayD<f32>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, hp: AdamParams) -> Self {
        let m = store.iter().map(|(_, _, p)| ArrayD::zeros(p.raw_dim())).collect();
        let v = store.iter().map(|(_, _, p)| ArrayD::zeros(p.raw_dim())).collect();
        Adam { hp, m, v, t: 0 }
    }

    /// One update over the parameters selected by `trainable`. Untouched
    /// parameters keep their moments as well as their values.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &GradStore,
        lr: f32,
        trainable: impl Fn(ParamId) -> bool,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.hp.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.hp.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            if !trainable(id) {
                continue;
            }
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.get_mut(id);
            for ((pv, gv), (mv, vv)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = self.hp.beta1 * *mv + (1.0 - self.hp.beta1) * gv;
                *vv = self.hp.beta2 * *vv + (1.0 - self.hp.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                let mut upd = mhat / (vhat.sqrt() + self.hp.eps);
                if self.hp.weight_decay > 0.0 {
                    upd += self.hp.weight_decay * *pv;
                }
                *pv -= lr * upd;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn adam_descends_quadratic() {
        let mut store = ParamStore::new();
        let id = store.register("x", Array1::from_vec(vec![5.0f32, -3.0]).into_dyn());
        let mut opt = Adam::new(&store, AdamParams::default());
        for _ in 0..2000 {
            let mut grads = store.zero_grads();
            let x = store.get(id).clone();
            grads.get_mut(id).assign(&x.mapv(|v| 2.0 * v));
            opt.step(&mut store, &grads, 0.05, |_| true);
        }
        for &v in store.get(id).iter() {
            assert!(v.abs() < 1e-2, "did not converge: {v}");
        }
    }

    #[test]
    fn frozen_params_are_bit_identical() {
        let mut store = ParamStore::new();
        let a = store.register("a", Array1::from_vec(vec![1.0f32]).into_dyn());
        let b = store.register("b", Array1::from_vec(vec![2.0f32]).into_dyn());
        let before = store.get(b).clone();
        let mut opt = Adam::new(&store, AdamParams::default());
        let mut grads = store.zero_grads();
        grads.get_mut(a)[[0]] = 1.0;
        grads.get_mut(b)[[0]] = 1.0;
        opt.step(&mut store, &grads, 0.1, |id| id == a);
        assert_eq!(store.get(b), &before);
        assert_ne!(store.get(a)[[0]], 1.0);
    }
}
