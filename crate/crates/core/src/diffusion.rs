//! Locally constrained diffusion of gallery affinities.

use crate::cluster::local_scale;
use crate::localfeat::DistanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    pub kernel_k: usize,
    pub knn_w: usize,
    pub iters: usize,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            kernel_k: 7,
            knn_w: 10,
            iters: 20,
        }
    }
}

/// Dense square similarity matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl AffinityMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        AffinityMatrix { n: idx.len(), data }
    }
}

/// Gaussian kernel with local bandwidths: `exp(-d^2 / (s_i s_j))`, where
/// `s_i` is the distance to the `kernel_k`-th neighbor (the smallest
/// positive distance if that is zero).
pub fn affinity_from_distance(dist: &DistanceMatrix, kernel_k: usize) -> AffinityMatrix {
    let n = dist.len();
    let sigma: Vec<f64> = (0..n).map(|i| local_scale(dist, i, kernel_k)).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = dist.get(i, j);
            data[i * n + j] = if i == j {
                1.0
            } else {
                (-d * d / (sigma[i] * sigma[j])).exp()
            };
        }
    }
    AffinityMatrix { n, data }
}

/// Row-stochastic transition restricted to each row's own entry plus its
/// `knn` largest other entries (ties by lower index), as sparse rows.
fn knn_transition(a: &AffinityMatrix, knn: usize) -> Vec<Vec<(usize, f64)>> {
    let n = a.n;
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&x, &y| a.get(i, y).total_cmp(&a.get(i, x)).then(x.cmp(&y)));
            others.truncate(knn);
            let mut cols = vec![i];
            cols.extend(others);
            cols.sort_unstable();
            let total: f64 = cols.iter().map(|&j| a.get(i, j)).sum();
            cols.into_iter()
                .map(|j| {
                    (
                        j,
                        if total > 0.0 {
                            a.get(i, j) / total
                        } else {
                            0.0
                        },
                    )
                })
                .collect()
        })
        .collect()
}

/// `iters` rounds of `W <- P W P^T` starting from `W = A`, with `P` the
/// kNN-masked row-normalized `A`.
pub fn lcdp(a: &AffinityMatrix, knn_w: usize, iters: usize) -> AffinityMatrix {
    let n = a.n;
    let p = knn_transition(a, knn_w.min(n.saturating_sub(1)));
    let symmetric = (0..n).all(|i| (i + 1..n).all(|j| a.get(i, j) == a.get(j, i)));
    let mut w = a.data.clone();
    let mut tmp = vec![0.0; n * n];
    for _ in 0..iters {
        // tmp = P W
        for i in 0..n {
            let out = &mut tmp[i * n..(i + 1) * n];
            out.iter_mut().for_each(|v| *v = 0.0);
            for &(k, pk) in &p[i] {
                for (o, &wv) in out.iter_mut().zip(&w[k * n..(k + 1) * n]) {
                    *o += pk * wv;
                }
            }
        }
        // W = tmp P^T, i.e. W[i][j] = sum_k tmp[i][k] P[j][k]; a symmetric
        // W stays symmetric, so only the upper triangle is summed
        for i in 0..n {
            let lo = if symmetric { i } else { 0 };
            for j in lo..n {
                let v = p[j].iter().map(|&(k, pk)| tmp[i * n + k] * pk).sum();
                w[i * n + j] = v;
                if symmetric {
                    w[j * n + i] = v;
                }
            }
        }
    }
    AffinityMatrix { n, data: w }
}

/// Diffusion restricted to the shapes in `subset` (in the given order).
/// The neighborhood shrinks to `subset.len() - 1` on small subsets.
pub fn constrained_lcdp(
    a: &AffinityMatrix,
    subset: &[usize],
    knn_w: usize,
    iters: usize,
) -> AffinityMatrix {
    let sub = a.submatrix(subset);
    let knn = knn_w.min(subset.len().saturating_sub(1));
    lcdp(&sub, knn, iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_limits() {
        let d = DistanceMatrix::from_fn(6, |i, j| if (i < 3) == (j < 3) { 1e-3 } else { 1e6 });
        let a = affinity_from_distance(&d, 2);
        for i in 0..6 {
            assert_eq!(a.get(i, i), 1.0);
            for j in 0..6 {
                if (i < 3) == (j < 3) {
                    assert!(a.get(i, j) > 0.3);
                } else {
                    assert!(a.get(i, j) < 1e-12);
                }
            }
        }
        // zero distance means full affinity
        let z = DistanceMatrix::from_fn(4, |i, j| if i + j == 1 { 0.0 } else { 2.0 });
        assert_eq!(affinity_from_distance(&z, 1).get(0, 1), 1.0);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let d = DistanceMatrix::from_fn(8, |i, j| (i as f64 - j as f64).abs());
        let a = affinity_from_distance(&d, 3);
        assert_eq!(lcdp(&a, 4, 0), a);
    }

    #[test]
    fn blocks_stay_separate() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = if (i < 5) == (j < 5) {
                    rng.random_range(0.3..1.0)
                } else {
                    0.0
                };
                data[i * n + j] = if i == j { 1.0 } else { v };
                data[j * n + i] = data[i * n + j];
            }
        }
        let a = AffinityMatrix { n, data };
        let w = lcdp(&a, 10, 20);
        for i in 0..n {
            for j in 0..n {
                if (i < 5) != (j < 5) {
                    assert_eq!(w.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn noisy_clusters_separate_after_diffusion() {
        let n = 24;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = if (i < 12) == (j < 12) {
                    0.9 + rng.random_range(-0.08..0.08)
                } else {
                    0.2
                };
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
            data[i * n + i] = 1.0;
        }
        let w = lcdp(&AffinityMatrix { n, data }, 10, 20);
        for i in 0..n {
            let within = (0..n)
                .filter(|&j| (i < 12) == (j < 12))
                .map(|j| w.get(i, j))
                .fold(f64::INFINITY, f64::min);
            let across = (0..n)
                .filter(|&j| (i < 12) != (j < 12))
                .map(|j| w.get(i, j))
                .fold(0.0, f64::max);
            assert!(within > across, "row {i}: {within} vs {across}");
        }
    }

    #[test]
    fn subsets() {
        let d = DistanceMatrix::from_fn(9, |i, j| ((i * 7 + j * 7) % 5) as f64 + 1.0);
        let a = affinity_from_distance(&d, 3);
        let all: Vec<usize> = (0..9).collect();
        assert_eq!(constrained_lcdp(&a, &all, 4, 5), lcdp(&a, 4, 5));
        let one = constrained_lcdp(&a, &[3], 4, 5);
        assert_eq!(
            one,
            AffinityMatrix {
                n: 1,
                data: vec![1.0]
            }
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn symmetric_and_non_negative(vals in proptest::collection::vec(0.0f64..5.0, 45), knn in 1usize..9, iters in 0usize..6) {
            let mut it = vals.into_iter();
            let d = DistanceMatrix::from_fn(10, |_, _| it.next().unwrap());
            let a = affinity_from_distance(&d, 3);
            for i in 0..10 {
                for j in 0..10 {
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&a.get(i, j)));
                }
            }
            let w = lcdp(&a, knn, iters);
            for i in 0..10 {
                for j in 0..10 {
                    prop_assert!(w.get(i, j) >= 0.0);
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                }
            }
        }
    }
}
