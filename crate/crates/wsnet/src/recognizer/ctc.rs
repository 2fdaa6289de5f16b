//! CTC loss via the forward-backward recursion, plus best-path decoding.
//!
//! Internals run in f64 log space; the gradient is returned with respect to
//! the raw logits (softmax included), which is what the training loop wants.

use crate::error::{Error, Result};
use ndarray::Array2;

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    log_sum_exp2(log_sum_exp2(a, b), c)
}

/// Minimum frame count that can align `labels` under CTC: one frame per label
/// plus a separating blank between equal neighbors.
pub fn required_frames(labels: &[usize]) -> usize {
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    labels.len() + repeats
}

/// Negative log-likelihood of `labels` under the CTC alignment
/// marginalization, together with the gradient w.r.t. the logits.
///
/// `logits` is [T, K+1] with the blank at column `blank`. An unalignable
/// transcript (too long for T) is an explicit error rather than an infinite
/// loss.
pub fn ctc_loss_grad(
    logits: &Array2<f32>,
    labels: &[usize],
    blank: usize,
) -> Result<(f64, Array2<f32>)> {
    let (t_len, k) = logits.dim();
    if t_len == 0 {
        return Err(Error::DimensionMismatch("empty logit sequence".into()));
    }
    for &l in labels {
        if l >= k || l == blank {
            return Err(Error::DimensionMismatch(format!(
                "label {l} out of range for {k} classes (blank {blank})"
            )));
        }
    }
    let required = required_frames(labels);
    if t_len < required {
        return Err(Error::Unalignable {
            transcript_len: labels.len(),
            required,
            frames: t_len,
        });
    }

    let logp = crate::nn::log_softmax_f64(logits);

    // Blank-interleaved label sequence l'.
    let s_len = 2 * labels.len() + 1;
    let lab = |s: usize| -> usize {
        if s % 2 == 0 {
            blank
        } else {
            labels[s / 2]
        }
    };

    let neg = f64::NEG_INFINITY;
    let mut alpha = Array2::<f64>::from_elem((t_len, s_len), neg);
    alpha[[0, 0]] = logp[[0, blank]];
    if s_len > 1 {
        alpha[[0, 1]] = logp[[0, lab(1)]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let cur = lab(s);
            let mut a = alpha[[t - 1, s]];
            if s >= 1 {
                a = log_sum_exp2(a, alpha[[t - 1, s - 1]]);
            }
            if s >= 2 && cur != blank && lab(s - 2) != cur {
                a = log_sum_exp2(a, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = a + logp[[t, cur]];
        }
    }

    let log_p_total = if s_len > 1 {
        log_sum_exp2(alpha[[t_len - 1, s_len - 1]], alpha[[t_len - 1, s_len - 2]])
    } else {
        alpha[[t_len - 1, s_len - 1]]
    };
    if log_p_total == f64::NEG_INFINITY {
        // alignable by the frame count check, so this means numerically dead
        // logits; surface it rather than returning inf silently
        return Err(Error::Diverged {
            iter: 0,
            detail: "CTC total path probability underflowed to zero".into(),
        });
    }

    // beta[t][s]: suffix sum over paths leaving state s after emitting at t.
    let mut beta = Array2::<f64>::from_elem((t_len, s_len), neg);
    beta[[t_len - 1, s_len - 1]] = 0.0;
    if s_len > 1 {
        beta[[t_len - 1, s_len - 2]] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let cur = lab(s);
            let stay = beta[[t + 1, s]] + logp[[t + 1, cur]];
            let next = if s + 1 < s_len {
                beta[[t + 1, s + 1]] + logp[[t + 1, lab(s + 1)]]
            } else {
                neg
            };
            let skip = if s + 2 < s_len && lab(s + 2) != blank && lab(s + 2) != cur {
                beta[[t + 1, s + 2]] + logp[[t + 1, lab(s + 2)]]
            } else {
                neg
            };
            beta[[t, s]] = log_sum_exp3(stay, next, skip);
        }
    }

    // Gradient w.r.t. logits: softmax(z) - state posterior per class.
    let mut grad = Array2::<f32>::zeros((t_len, k));
    for t in 0..t_len {
        let mut class_post = vec![neg; k];
        for s in 0..s_len {
            let cur = lab(s);
            let ab = alpha[[t, s]] + beta[[t, s]];
            class_post[cur] = log_sum_exp2(class_post[cur], ab);
        }
        for c in 0..k {
            let y = logp[[t, c]].exp();
            let post = (class_post[c] - log_p_total).exp();
            grad[[t, c]] = (y - post) as f32;
        }
    }

    Ok((-log_p_total, grad))
}

pub fn ctc_loss(logits: &Array2<f32>, labels: &[usize], blank: usize) -> Result<f64> {
    ctc_loss_grad(logits, labels, blank).map(|(l, _)| l)
}

/// Best-path decoding: per-frame argmax, collapse repeats, drop blanks.
pub fn greedy_decode(logits: &Array2<f32>, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for row in logits.rows() {
        let mut best = 0usize;
        let mut best_v = f32::NEG_INFINITY;
        for (i, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        if best != prev && best != blank {
            out.push(best);
        }
        prev = best;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::rel_err;
    use ndarray::Array2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive path-sum oracle: enumerate all label paths of length T,
    /// collapse, and sum softmax probabilities of those matching the target.
    fn oracle_loss(logits: &Array2<f32>, labels: &[usize], blank: usize) -> f64 {
        let (t_len, k) = logits.dim();
        let logp = crate::nn::log_softmax_f64(logits);
        let mut total = 0.0f64;
        let paths = (k as u64).pow(t_len as u32);
        for code in 0..paths {
            let mut c = code;
            let mut p = 0.0f64;
            let mut collapsed = Vec::new();
            let mut prev = usize::MAX;
            for t in 0..t_len {
                let sym = (c % k as u64) as usize;
                c /= k as u64;
                p += logp[[t, sym]];
                if sym != prev && sym != blank {
                    collapsed.push(sym);
                }
                prev = sym;
            }
            if collapsed == labels {
                total += p.exp();
            }
        }
        -total.ln()
    }

    #[test]
    fn single_frame_uniform_half() {
        // T=1, classes {a, blank}, uniform logits, transcript "a" -> -ln(0.5)
        let logits = Array2::<f32>::zeros((1, 2));
        let (loss, _) = ctc_loss_grad(&logits, &[0], 1).unwrap();
        assert!((loss - 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn repeated_label_needs_separator() {
        let logits = Array2::<f32>::zeros((2, 2));
        let err = ctc_loss_grad(&logits, &[0, 0], 1).unwrap_err();
        match err {
            Error::Unalignable {
                transcript_len,
                required,
                frames,
            } => {
                assert_eq!((transcript_len, required, frames), (2, 3, 2));
            }
            other => panic!("expected Unalignable, got {other:?}"),
        }
        assert!(ctc_loss(&Array2::<f32>::zeros((3, 2)), &[0, 0], 1).is_ok());
    }

    #[test]
    fn matches_exhaustive_oracle_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        // all instances with T <= 6, charset sizes 1..=3 (plus blank),
        // transcripts up to length 3
        for charset in 1usize..=3 {
            let k = charset + 1;
            let blank = charset; // blank last
            let mut transcripts: Vec<Vec<usize>> = vec![vec![]];
            for len in 1..=3usize {
                let count = charset.pow(len as u32);
                for code in 0..count {
                    let mut c = code;
                    let mut t = Vec::new();
                    for _ in 0..len {
                        t.push(c % charset);
                        c /= charset;
                    }
                    transcripts.push(t);
                }
            }
            for t_len in 1..=6usize {
                for labels in &transcripts {
                    if labels.is_empty() {
                        continue;
                    }
                    if required_frames(labels) > t_len {
                        continue;
                    }
                    let logits =
                        Array2::<f32>::from_shape_fn((t_len, k), |_| rng.random_range(-2.0..2.0));
                    let (loss, _) = ctc_loss_grad(&logits, labels, blank).unwrap();
                    let oracle = oracle_loss(&logits, labels, blank);
                    let rel = (loss - oracle).abs() / oracle.abs().max(1e-12);
                    assert!(
                        rel < 1e-6,
                        "loss {loss} vs oracle {oracle} (rel {rel}) for T={t_len} labels={labels:?} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t_len = rng.random_range(3..8usize);
            let k = rng.random_range(3..5usize);
            let blank = k - 1;
            let n_labels = rng.random_range(1..3usize);
            let labels: Vec<usize> =
                (0..n_labels).map(|_| rng.random_range(0..k - 1)).collect();
            if required_frames(&labels) > t_len {
                continue;
            }
            let mut logits =
                Array2::<f32>::from_shape_fn((t_len, k), |_| rng.random_range(-1.5..1.5));
            let (_, grad) = ctc_loss_grad(&logits, &labels, blank).unwrap();
            let h = 1e-4f32;
            for t in 0..t_len {
                for c in 0..k {
                    let orig = logits[[t, c]];
                    logits[[t, c]] = orig + h;
                    let lp = ctc_loss(&logits, &labels, blank).unwrap();
                    logits[[t, c]] = orig - h;
                    let lm = ctc_loss(&logits, &labels, blank).unwrap();
                    logits[[t, c]] = orig;
                    let fd = (lp - lm) / (2.0 * h as f64);
                    let err = rel_err(grad[[t, c]] as f64, fd);
                    assert!(
                        err < 1e-3,
                        "grad[{t},{c}] analytic {} fd {fd} err {err}",
                        grad[[t, c]]
                    );
                }
            }
        }
    }

    #[test]
    fn greedy_decode_collapses() {
        // columns: 0 = 'a', 1 = 'b', 2 = blank
        let mk = |path: &[usize]| {
            let mut l = Array2::<f32>::zeros((path.len(), 3));
            for (t, &p) in path.iter().enumerate() {
                l[[t, p]] = 5.0;
            }
            l
        };
        assert_eq!(greedy_decode(&mk(&[2, 0, 0, 2, 1]), 2), vec![0, 1]); // blank,a,a,blank,b -> ab
        assert_eq!(greedy_decode(&mk(&[2, 2, 2]), 2), Vec::<usize>::new());
        assert_eq!(greedy_decode(&mk(&[0, 2, 0]), 2), vec![0, 0]); // a,blank,a -> aa
    }
}
