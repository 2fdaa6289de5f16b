//! Central finite-difference checks used by the layer unit tests.

use super::param::{ParamId, ParamStore};

/// Central finite difference of `loss` with respect to one parameter element.
pub fn fd_param(
    store: &mut ParamStore,
    id: ParamId,
    flat_idx: usize,
    h: f32,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let orig = store.get(id).as_slice().unwrap()[flat_idx];
    store.get_mut(id).as_slice_mut().unwrap()[flat_idx] = orig + h;
    let lp = loss(store);
    store.get_mut(id).as_slice_mut().unwrap()[flat_idx] = orig - h;
    let lm = loss(store);
    store.get_mut(id).as_slice_mut().unwrap()[flat_idx] = orig;
    (lp - lm) / (2.0 * h as f64)
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / denom
}

/// Check analytic parameter gradients against finite differences on a sample
/// of elements from every parameter. Panics with context on mismatch.
pub fn check_all_params(
    store: &mut ParamStore,
    analytic: &super::param::GradStore,
    probes_per_param: usize,
    h: f32,
    tol: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) {
    let ids: Vec<(ParamId, String, usize)> = store
        .iter()
        .map(|(id, name, p)| (id, name.to_string(), p.len()))
        .collect();
    for (id, name, len) in ids {
        let stride = (len / probes_per_param).max(1);
        for flat_idx in (0..len).step_by(stride) {
            let a = analytic.get(id).as_slice().unwrap()[flat_idx] as f64;
            let n = fd_param(store, id, flat_idx, h, &mut loss);
            let e = rel_err(a, n);
            assert!(
                e < tol,
                "gradient mismatch for {name}[{flat_idx}]: analytic {a:.6e} vs fd {n:.6e} (rel {e:.3e})"
            );
        }
    }
}
