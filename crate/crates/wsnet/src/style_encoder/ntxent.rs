//! Temperature-scaled contrastive loss over writer-labelled embeddings.

use crate::error::{Error, Result};
use ndarray::{Array1, ArrayView1};

fn dot(a: &ArrayView1<f32>, b: &ArrayView1<f32>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Loss of one ordered positive pair (q, p) against a set of negatives:
/// -log Softmax over {p} ∪ negatives of the temperature-scaled similarities.
/// An empty negative set gives exactly 0.
pub fn nt_xent_pair(
    q: &ArrayView1<f32>,
    p: &ArrayView1<f32>,
    negatives: &[ArrayView1<f32>],
    tau: f64,
) -> f64 {
    let sp = dot(q, p) / tau;
    // log-sum-exp over positive + negatives
    let mut m = sp;
    let neg_s: Vec<f64> = negatives.iter().map(|n| dot(q, n) / tau).collect();
    for &s in &neg_s {
        m = m.max(s);
    }
    let mut z = (sp - m).exp();
    for &s in &neg_s {
        z += (s - m).exp();
    }
    -(sp - (m + z.ln()))
}

/// Mean pair loss over all ordered same-writer pairs in a batch, and the
/// gradient with respect to every embedding. For an anchor q, the negatives
/// are all batch embeddings of other writers.
pub fn batch_loss_grad(
    embeddings: &[Array1<f32>],
    writers: &[usize],
    tau: f64,
) -> Result<(f64, Vec<Array1<f32>>)> {
    assert_eq!(embeddings.len(), writers.len());
    if tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let n = embeddings.len();
    let ed = embeddings.first().map(|e| e.len()).unwrap_or(0);

    let mut pairs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && writers[a] == writers[b] {
                pairs.push((a, b));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoPositivePair);
    }

    let mut grads = vec![Array1::<f32>::zeros(ed); n];
    let mut total = 0.0f64;
    let pair_w = 1.0 / pairs.len() as f64;
    for &(qi, pi) in &pairs {
        let q = &embeddings[qi];
        let neg_idx: Vec<usize> = (0..n).filter(|&j| writers[j] != writers[qi]).collect();

        let sp = dot(&q.view(), &embeddings[pi].view()) / tau;
        let neg_s: Vec<f64> = neg_idx
            .iter()
            .map(|&j| dot(&q.view(), &embeddings[j].view()) / tau)
            .collect();
        let mut m = sp;
        for &s in &neg_s {
            m = m.max(s);
        }
        let mut z = (sp - m).exp();
        for &s in &neg_s {
            z += (s - m).exp();
        }
        let log_z = m + z.ln();
        total += -(sp - log_z) * pair_w;

        // softmax posteriors
        let post_p = (sp - log_z).exp();
        // d/ds_qp = (post_p - 1)/tau ; d/ds_qnj = post_j/tau
        let coef_p = (post_p - 1.0) / tau * pair_w;
        for d in 0..ed {
            grads[qi][d] += (coef_p * embeddings[pi][d] as f64) as f32;
            grads[pi][d] += (coef_p * q[d] as f64) as f32;
        }
        for (&j, &s) in neg_idx.iter().zip(neg_s.iter()) {
            let coef = (s - log_z).exp() / tau * pair_w;
            for d in 0..ed {
                grads[qi][d] += (coef * embeddings[j][d] as f64) as f32;
                grads[j][d] += (coef * q[d] as f64) as f32;
            }
        }
    }
    Ok((total, grads))
}

pub fn batch_loss(embeddings: &[Array1<f32>], writers: &[usize], tau: f64) -> Result<f64> {
    batch_loss_grad(embeddings, writers, tau).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::rel_err;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f32>) -> Array1<f32> {
        let mut a = Array1::from_vec(v);
        crate::nn::l2_normalize(&mut a);
        a
    }

    #[test]
    fn closed_form_perfect_pair_one_orthogonal_negative() {
        // q.p = 1, one negative with q.n = 0, tau = 0.15:
        // loss = -ln(e^{1/0.15} / (e^{1/0.15} + 1)) ~= 1.272e-3
        let q = array![1.0f32, 0.0];
        let p = array![1.0f32, 0.0];
        let n = array![0.0f32, 1.0];
        let loss = nt_xent_pair(&q.view(), &p.view(), &[n.view()], 0.15);
        let expected = -((1.0f64 / 0.15).exp() / ((1.0f64 / 0.15).exp() + 1.0)).ln();
        assert!((loss - expected).abs() < 1e-9, "loss {loss} vs {expected}");
        assert!((loss - 1.272e-3).abs() < 5e-6, "loss {loss}");
    }

    #[test]
    fn uniform_logits_give_ln_n_plus_one() {
        // q.p equals every q.n_j: loss = ln(N + 1). Identical vectors for p
        // and all negatives make every similarity match trivially.
        let q = unit(vec![1.0, 1.0, 0.0]);
        let p = q.clone();
        for n_neg in [1usize, 4, 9] {
            let negs: Vec<Array1<f32>> = (0..n_neg).map(|_| q.clone()).collect();
            let neg_views: Vec<_> = negs.iter().map(|v| v.view()).collect();
            let loss = nt_xent_pair(&q.view(), &p.view(), &neg_views, 0.15);
            let expected = ((n_neg + 1) as f64).ln();
            assert!(
                (loss - expected).abs() < 1e-9,
                "N={n_neg}: {loss} vs {expected}"
            );
        }
    }

    #[test]
    fn loss_decreases_as_positive_similarity_rises() {
        let n = unit(vec![0.3, -0.8, 0.5]);
        let q = unit(vec![1.0, 0.0, 0.0]);
        let mut prev = f64::INFINITY;
        for t in 0..10 {
            let angle = 1.2f32 - t as f32 * 0.12;
            let p = unit(vec![angle.cos(), angle.sin(), 0.0]);
            let loss = nt_xent_pair(&q.view(), &p.view(), &[n.view()], 0.15);
            assert!(loss < prev, "not strictly decreasing at step {t}");
            prev = loss;
        }
    }

    #[test]
    fn no_negatives_is_zero_for_any_similarity() {
        let q = unit(vec![0.2, 0.9]);
        let p = unit(vec![-0.7, 0.4]);
        assert_eq!(nt_xent_pair(&q.view(), &p.view(), &[], 0.15), 0.0);
    }

    #[test]
    fn batch_enumerates_ordered_pairs_and_negatives() {
        // writers {A, A, B}: positive pairs (0,1) and (1,0); each with one negative
        let e = vec![
            unit(vec![1.0, 0.1, 0.0]),
            unit(vec![0.9, 0.2, 0.1]),
            unit(vec![-0.5, 0.8, 0.0]),
        ];
        let writers = vec![0usize, 0, 1];
        let (loss, _) = batch_loss_grad(&e, &writers, 0.15).unwrap();
        let l01 = nt_xent_pair(&e[0].view(), &e[1].view(), &[e[2].view()], 0.15);
        let l10 = nt_xent_pair(&e[1].view(), &e[0].view(), &[e[2].view()], 0.15);
        assert!((loss - (l01 + l10) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_loss_matches_brute_force_enumeration_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..30 {
            let n = rng.random_range(2..=12usize);
            let ed = rng.random_range(2..=6usize);
            let writers: Vec<usize> = (0..n).map(|_| rng.random_range(0..3usize)).collect();
            let embeddings: Vec<Array1<f32>> = (0..n)
                .map(|_| {
                    let mut v =
                        Array1::from_shape_fn(ed, |_| rng.random_range(-1.0..1.0f32));
                    crate::nn::l2_normalize(&mut v);
                    v
                })
                .collect();
            // brute force: enumerate ordered pairs, call the pair form
            let mut pair_losses = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && writers[a] == writers[b] {
                        let negs: Vec<_> = (0..n)
                            .filter(|&j| writers[j] != writers[a])
                            .map(|j| embeddings[j].view())
                            .collect();
                        pair_losses.push(nt_xent_pair(
                            &embeddings[a].view(),
                            &embeddings[b].view(),
                            &negs,
                            0.15,
                        ));
                    }
                }
            }
            let batch = batch_loss(&embeddings, &writers, 0.15);
            if pair_losses.is_empty() {
                assert!(matches!(batch, Err(Error::NoPositivePair)), "trial {trial}");
            } else {
                let oracle: f64 = pair_losses.iter().sum::<f64>() / pair_losses.len() as f64;
                let got = batch.unwrap();
                assert!(
                    (got - oracle).abs() / oracle.abs().max(1e-9) < 1e-9,
                    "trial {trial}: {got} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn batch_order_does_not_change_loss() {
        let e = vec![
            unit(vec![1.0, 0.2]),
            unit(vec![0.8, 0.4]),
            unit(vec![-0.3, 0.9]),
            unit(vec![0.1, -0.9]),
        ];
        let writers = vec![0usize, 0, 1, 1];
        let a = batch_loss(&e, &writers, 0.15).unwrap();
        let perm = [2usize, 0, 3, 1];
        let e2: Vec<_> = perm.iter().map(|&i| e[i].clone()).collect();
        let w2: Vec<_> = perm.iter().map(|&i| writers[i]).collect();
        let b = batch_loss(&e2, &w2, 0.15).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5usize;
        let ed = 4usize;
        let writers = vec![0usize, 0, 1, 1, 2];
        let mut embeddings: Vec<Array1<f32>> = (0..n)
            .map(|_| {
                let mut v = Array1::from_shape_fn(ed, |_| rng.random_range(-1.0..1.0f32));
                crate::nn::l2_normalize(&mut v);
                v
            })
            .collect();
        let (_, grads) = batch_loss_grad(&embeddings, &writers, 0.15).unwrap();
        for i in 0..n {
            for d in 0..ed {
                let h = 1e-4f32;
                let orig = embeddings[i][d];
                embeddings[i][d] = orig + h;
                let lp = batch_loss(&embeddings, &writers, 0.15).unwrap();
                embeddings[i][d] = orig - h;
                let lm = batch_loss(&embeddings, &writers, 0.15).unwrap();
                embeddings[i][d] = orig;
                let fd = (lp - lm) / (2.0 * h as f64);
                let err = rel_err(grads[i][d] as f64, fd);
                assert!(err < 1e-3, "grad[{i}][{d}]: {} vs {fd}", grads[i][d]);
            }
        }
    }

    #[test]
    fn lower_temperature_widens_hard_easy_gap() {
        // a hard negative sits closer to the anchor than the positive does;
        // an easy one points away
        let q = unit(vec![1.0, 0.0, 0.0]);
        let p = unit(vec![0.95, 0.3, 0.0]);
        let hard = unit(vec![0.99, 0.14, 0.0]);
        let easy = unit(vec![-0.9, 0.1, 0.4]);
        let mut prev_gap = f64::NEG_INFINITY;
        for tau in [0.5f64, 0.15, 0.05] {
            let lh = nt_xent_pair(&q.view(), &p.view(), &[hard.view()], tau);
            let le = nt_xent_pair(&q.view(), &p.view(), &[easy.view()], tau);
            let gap = lh - le;
            assert!(gap > prev_gap, "gap not increasing as tau falls: {gap} vs {prev_gap}");
            prev_gap = gap;
        }
    }
}
