//! Spectral clustering of the gallery in the local feature space and
//! selection of the cluster cores used to train the forests.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, TsrError};
use crate::localfeat::DistanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterParams {
    /// The local scale of a shape is its distance to this nearest neighbor.
    pub scale_neighbor: usize,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            scale_neighbor: 7,
            restarts: 50,
            max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub m: usize,
    /// Cluster id per shape. Ids are numbered by their smallest member.
    pub assignment: Vec<usize>,
    pub medoids: Vec<usize>,
    /// `(shape, cluster)` pairs, grouped by cluster, closest to the medoid
    /// first.
    pub training_set: Vec<(usize, usize)>,
}

impl ClusterModel {
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == k)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.m];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }

    /// Build from an assignment, computing medoids and training sets.
    pub fn from_assignment(assignment: Vec<usize>, dist: &DistanceMatrix) -> Result<Self> {
        let assignment = canonical_labels(&assignment);
        let m = assignment.iter().max().map_or(0, |&a| a + 1);
        let mut model = ClusterModel {
            m,
            assignment,
            medoids: Vec::new(),
            training_set: Vec::new(),
        };
        model.medoids = (0..m).map(|k| medoid(&model.members(k), dist)).collect();
        model.training_set = select_training(&model, dist);
        Ok(model)
    }
}

/// Relabel so cluster ids appear in increasing order of first member.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Member with the least summed distance to the others, lowest index on
/// ties.
fn medoid(members: &[usize], dist: &DistanceMatrix) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in members {
        let s: f64 = members.iter().map(|&j| dist.get(i, j)).sum();
        if s < best.0 {
            best = (s, i);
        }
    }
    best.1
}

/// The `ceil(|c| / 2)` members of each cluster closest to its medoid, ties
/// broken by lower shape index.
pub fn select_training(model: &ClusterModel, dist: &DistanceMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..model.m {
        let mut members = model.members(k);
        let med = model.medoids[k];
        members.sort_by(|&a, &b| {
            dist.get(med, a)
                .total_cmp(&dist.get(med, b))
                .then(a.cmp(&b))
        });
        let keep = members.len().div_ceil(2);
        out.extend(members[..keep].iter().map(|&i| (i, k)));
    }
    out
}

/// Distance to the `k`-th nearest other point; falls back to the smallest
/// positive distance when that is zero, and to 1 when there is none.
pub fn local_scale(dist: &DistanceMatrix, i: usize, k: usize) -> f64 {
    let n = dist.len();
    let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist.get(i, j)).collect();
    if row.is_empty() {
        return 1.0;
    }
    row.sort_by(f64::total_cmp);
    let s = row[(k.max(1) - 1).min(row.len() - 1)];
    if s > 0.0 {
        return s;
    }
    row.into_iter().find(|&d| d > 0.0).unwrap_or(1.0)
}

/// Rows of the top-`m` eigenvectors of the normalized affinity, scaled to
/// unit length.
pub fn spectral_embedding(
    dist: &DistanceMatrix,
    m: usize,
    scale_neighbor: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = dist.len();
    let sigma: Vec<f64> = (0..n)
        .map(|i| local_scale(dist, i, scale_neighbor))
        .collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = dist.get(i, j);
                a[(i, j)] = (-d * d / (sigma[i] * sigma[j])).exp();
            }
        }
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    for i in 0..n {
        for j in 0..n {
            let s = (deg[i] * deg[j]).sqrt();
            a[(i, j)] = if s > 0.0 { a[(i, j)] / s } else { 0.0 };
        }
    }
    let eig = SymmetricEigen::try_new(a, 1e-12, 10_000).ok_or(TsrError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .total_cmp(&eig.eigenvalues[x])
            .then(x.cmp(&y))
    });
    let mut rows = vec![vec![0.0; m]; n];
    for (c, &k) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(k);
        // fix the sign so the embedding is reproducible
        let pivot = (0..n)
            .max_by(|&x, &y| v[x].abs().total_cmp(&v[y].abs()).then(y.cmp(&x)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            rows[i][c] = sign * v[i];
        }
    }
    for r in rows.iter_mut() {
        let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 0.0 {
            r.iter_mut().for_each(|x| *x /= len);
        }
    }
    Ok(rows)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One k-means++ seeded Lloyd run; returns (within-cluster sum, labels).
fn kmeans_once(
    x: &[Vec<f64>],
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> (f64, Vec<usize>) {
    let n = x.len();
    let mut centers: Vec<Vec<f64>> = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if t < d {
                    idx = i;
                    break;
                }
                t -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(x[pick].clone());
        for (i, p) in x.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    let dim = x[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(p, &centers[a])
                        .total_cmp(&sq_dist(p, &centers[b]))
                        .then(a.cmp(&b))
                })
                .unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // refill empty clusters with the point farthest from its center
        for c in 0..k {
            if !labels.contains(&c) {
                let far = (0..n)
                    .filter(|&i| labels.iter().filter(|&&l| l == labels[i]).count() > 1)
                    .max_by(|&a, &b| {
                        sq_dist(&x[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&x[b], &centers[labels[b]]))
                            .then(b.cmp(&a))
                    });
                if let Some(f) = far {
                    labels[f] = c;
                    changed = true;
                }
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let mut acc = vec![0.0; dim];
            let mut cnt = 0usize;
            for (i, p) in x.iter().enumerate() {
                if labels[i] == c {
                    acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
                    cnt += 1;
                }
            }
            if cnt > 0 {
                *center = acc.into_iter().map(|v| v / cnt as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let sse = x
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    (sse, labels)
}

/// Best of `restarts` k-means++ runs; restart `r` uses stream `r` of the
/// seeded generator.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64, restarts: usize, max_iter: usize) -> Vec<usize> {
    let runs: Vec<(f64, Vec<usize>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            kmeans_once(x, k, &mut rng, max_iter)
        })
        .collect();
    runs.into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(i.cmp(j)))
        .map(|(_, (_, l))| l)
        .unwrap_or_default()
}

/// Normalized spectral clustering with local-scaling affinities.
pub fn spectral_cluster(
    dist: &DistanceMatrix,
    m: usize,
    seed: u64,
    params: &ClusterParams,
) -> Result<ClusterModel> {
    let n = dist.len();
    if m == 0 || m > n {
        return Err(TsrError::InvalidM { m, n });
    }
    let assignment = if m == 1 {
        vec![0; n]
    } else if m == n {
        (0..n).collect()
    } else {
        let emb = spectral_embedding(dist, m, params.scale_neighbor)?;
        kmeans(&emb, m, seed, params.restarts, params.max_iter)
    };
    ClusterModel::from_assignment(assignment, dist)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&v| v + 1);
    let kb = b.iter().max().map_or(0, |&v| v + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&v| c2(v)).sum();
    let rows: f64 = (0..ka)
        .map(|x| c2(table[x * kb..(x + 1) * kb].iter().sum()))
        .sum();
    let cols: f64 = (0..kb)
        .map(|y| c2((0..ka).map(|x| table[x * kb + y]).sum()))
        .sum();
    let total = c2(n as u64);
    let expected = if total > 0.0 {
        rows * cols / total
    } else {
        0.0
    };
    let max = (rows + cols) / 2.0;
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}
