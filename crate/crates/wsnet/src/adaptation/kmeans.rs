//! Lloyd's k-means with k-means++ seeding and restarts, on embedding rows.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct KMeansResult {
    pub centroids: Array2<f32>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn dist2(a: &ArrayView1<f32>, b: &ArrayView1<f32>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn seed_plus_plus(data: &Array2<f32>, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = data.nrows();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2(&data.row(i), &data.row(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centers.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(dist2(&data.row(i), &data.row(next)));
        }
    }
    centers
}

/// k is clamped to the number of rows. 10 restarts, best inertia wins.
pub fn kmeans(data: &Array2<f32>, k: usize, restarts: usize, max_iters: usize, seed: u64) -> KMeansResult {
    let n = data.nrows();
    let d = data.ncols();
    let k = k.clamp(1, n);
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64 * 0x9e37));
        let centers_idx = seed_plus_plus(data, k, &mut rng);
        let mut centroids = Array2::<f32>::zeros((k, d));
        for (c, &i) in centers_idx.iter().enumerate() {
            centroids.row_mut(c).assign(&data.row(i));
        }
        let mut assignment = vec![0usize; n];
        for _ in 0..max_iters {
            let mut changed = false;
            for i in 0..n {
                let mut best_c = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let dd = dist2(&data.row(i), &centroids.row(c));
                    if dd < best_d {
                        best_d = dd;
                        best_c = c;
                    }
                }
                if assignment[i] != best_c {
                    assignment[i] = best_c;
                    changed = true;
                }
            }
            let mut sums = Array2::<f64>::zeros((k, d));
            let mut counts = vec![0usize; k];
            for i in 0..n {
                counts[assignment[i]] += 1;
                for j in 0..d {
                    sums[[assignment[i], j]] += data[[i, j]] as f64;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for j in 0..d {
                        centroids[[c, j]] = (sums[[c, j]] / counts[c] as f64) as f32;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| dist2(&data.row(i), &centroids.row(assignment[i])))
            .sum();
        if best.as_ref().map(|b| inertia < b.inertia).unwrap_or(true) {
            best = Some(KMeansResult {
                centroids,
                assignment,
                inertia,
            });
        }
    }
    best.unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_three_obvious_clusters() {
        let mut data = Array2::<f32>::zeros((30, 2));
        for i in 0..30 {
            let c = i / 10;
            data[[i, 0]] = c as f32 * 10.0 + (i % 10) as f32 * 0.01;
            data[[i, 1] ] = c as f32 * -5.0;
        }
        let r = kmeans(&data, 3, 10, 50, 1);
        for group in 0..3 {
            let first = r.assignment[group * 10];
            for i in 0..10 {
                assert_eq!(r.assignment[group * 10 + i], first, "row {}", group * 10 + i);
            }
        }
        assert!(r.inertia < 1.0);
    }

    #[test]
    fn k_clamped_to_row_count() {
        let data = Array2::<f32>::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f32);
        let r = kmeans(&data, 50, 3, 20, 2);
        assert_eq!(r.centroids.nrows(), 4);
        // each row its own cluster
        let mut seen = std::collections::BTreeSet::new();
        for &a in &r.assignment {
            seen.insert(a);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let data = Array2::<f32>::from_shape_fn((20, 4), |(i, j)| ((i * 7 + j * 3) as f32).sin());
        let a = kmeans(&data, 4, 10, 50, 9);
        let b = kmeans(&data, 4, 10, 50, 9);
        assert_eq!(a.assignment, b.assignment);
    }
}
