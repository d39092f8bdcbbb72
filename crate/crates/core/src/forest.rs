//! Random forests over subsets of the global feature, combined by the sum
//! rule into a cluster relevance distribution.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, TsrError};
use crate::globalfeat::{GlobalFeature, GEOMETRIC_DIMS, GLOBAL_DIM, SKELETON_DIMS, WAVELET_DIMS};

impl AsRef<[f64]> for GlobalFeature {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Feature index subsets, one forest each.
    pub groups: Vec<Vec<usize>>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: 12,
            min_leaf: 1,
            groups: default_groups(),
        }
    }
}

/// All dimensions, then each feature family on its own.
pub fn default_groups() -> Vec<Vec<usize>> {
    vec![
        (0..GLOBAL_DIM).collect(),
        SKELETON_DIMS.collect(),
        WAVELET_DIMS.collect(),
        GEOMETRIC_DIMS.collect(),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

/// Binary tree stored as a node arena; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestGroup {
    pub mask: Vec<usize>,
    pub trees: Vec<DecisionTree>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestEnsemble {
    pub groups: Vec<ForestGroup>,
    pub n_classes: usize,
    pub dim: usize,
    pub trees_per_group: usize,
    pub seed: u64,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct Grower<'a, F> {
    x: &'a [F],
    y: &'a [usize],
    n_classes: usize,
    mask: &'a [usize],
    n_candidates: usize,
    max_depth: usize,
    min_leaf: usize,
}

impl<F: AsRef<[f64]>> Grower<'_, F> {
    fn grow(
        &self,
        rows: Vec<usize>,
        depth: usize,
        rng: &mut ChaCha8Rng,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        let mut counts = vec![0usize; self.n_classes];
        for &r in &rows {
            counts[self.y[r]] += 1;
        }
        let leaf = Node::Leaf {
            class: majority(&counts),
        };
        nodes.push(leaf.clone());
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || rows.len() <= self.min_leaf {
            return id;
        }
        let mut candidates: Vec<usize> = sample(rng, self.mask.len(), self.n_candidates)
            .into_iter()
            .map(|k| self.mask[k])
            .collect();
        candidates.sort_unstable();
        let parent = gini(&counts, rows.len());
        // (impurity, feature, threshold); strict improvement keeps the
        // lower feature and threshold on ties
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &candidates {
            let mut sorted = rows.clone();
            sorted.sort_by(|&a, &b| self.x[a].as_ref()[f].total_cmp(&self.x[b].as_ref()[f]));
            let mut left = vec![0usize; self.n_classes];
            let n = sorted.len();
            for s in 0..n - 1 {
                left[self.y[sorted[s]]] += 1;
                let (v, w) = (
                    self.x[sorted[s]].as_ref()[f],
                    self.x[sorted[s + 1]].as_ref()[f],
                );
                if v == w {
                    continue;
                }
                let nl = s + 1;
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let imp = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl))
                    / n as f64;
                let thr = v + (w - v) / 2.0;
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((imp, feature, threshold)) = best else {
            return id;
        };
        if imp >= parent {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[i].as_ref()[feature] <= threshold);
        let left = self.grow(l, depth + 1, rng, nodes);
        let right = self.grow(r, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Train one forest per feature group. Tree `t` of group `g` draws its
/// bootstrap sample and candidate features from stream `g * trees + t` of
/// the seeded generator.
pub fn train_forest<F: AsRef<[f64]> + Sync>(
    x: &[F],
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestEnsemble> {
    if x.len() != y.len() {
        return Err(TsrError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x.first().map_or(0, |r| r.as_ref().len());
    for (i, r) in x.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(TsrError::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if let Some(d) = r.iter().position(|v| !v.is_finite()) {
            return Err(TsrError::NonFiniteFeature { sample: i, dim: d });
        }
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(TsrError::InvalidConfig(format!(
            "class label {bad} >= {n_classes}"
        )));
    }
    let mut distinct = y.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(TsrError::SingleClassTraining);
    }
    if params.trees == 0 || params.groups.is_empty() {
        return Err(TsrError::InvalidConfig(
            "forest needs at least one group and one tree".into(),
        ));
    }
    for mask in &params.groups {
        if mask.is_empty() || mask.iter().any(|&f| f >= dim) {
            return Err(TsrError::InvalidConfig(format!(
                "invalid feature group {mask:?}"
            )));
        }
    }
    let n = x.len();
    let groups = params
        .groups
        .iter()
        .enumerate()
        .map(|(g, mask)| {
            let grower = Grower {
                x,
                y,
                n_classes,
                mask,
                n_candidates: ((mask.len() as f64).sqrt().floor() as usize).max(1),
                max_depth: params.max_depth,
                min_leaf: params.min_leaf.max(1),
            };
            let trees = (0..params.trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((g * params.trees + t) as u64);
                    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    let mut nodes = Vec::new();
                    grower.grow(rows, 0, &mut rng, &mut nodes);
                    DecisionTree { nodes }
                })
                .collect();
            ForestGroup {
                mask: mask.clone(),
                trees,
            }
        })
        .collect();
    Ok(ForestEnsemble {
        groups,
        n_classes,
        dim,
        trees_per_group: params.trees,
        seed,
    })
}

/// Normalize non-negative votes into a distribution.
pub fn normalize_votes(votes: &[f64]) -> Vec<f64> {
    let total: f64 = votes.iter().sum();
    if total > 0.0 {
        votes.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / votes.len() as f64; votes.len()]
    }
}

impl ForestEnsemble {
    /// Leaf votes per class summed over every tree of every group.
    pub fn votes(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(TsrError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut v = vec![0.0; self.n_classes];
        for g in &self.groups {
            for t in &g.trees {
                v[t.predict(x)] += 1.0;
            }
        }
        Ok(v)
    }

    /// Fraction of votes per cluster.
    pub fn predict_prf(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(normalize_votes(&self.votes(x)?))
    }

    pub fn total_trees(&self) -> usize {
        self.groups.iter().map(|g| g.trees.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let mut row: Vec<f64> = (0..GLOBAL_DIM).map(|_| rng.random::<f64>()).collect();
            row[5] = c as f64 * 2.0 + rng.random::<f64>() * 0.5;
            x.push(row);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_training_is_classified() {
        let (x, y) = separable();
        let f = train_forest(&x, &y, 2, &ForestParams::default(), 1).unwrap();
        assert_eq!(f.total_trees(), 400);
        for (r, &c) in x.iter().zip(&y) {
            let p = f.predict_prf(r).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let arg = if p[1] > p[0] { 1 } else { 0 };
            assert_eq!(arg, c);
        }
        // a lone split-on-feature forest fits the training set exactly
        let single = ForestParams {
            trees: 1,
            groups: vec![vec![5]],
            ..Default::default()
        };
        let f1 = train_forest(&x, &y, 2, &single, 0).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(r, &c)| f1.groups[0].trees[0].predict(r) == c)
            .count();
        assert_eq!(correct, x.len());
    }

    #[test]
    fn deterministic_and_bounded_depth() {
        let (x, y) = separable();
        let p = ForestParams {
            max_depth: 3,
            ..Default::default()
        };
        let a = train_forest(&x, &y, 3, &p, 9).unwrap();
        assert_eq!(a, train_forest(&x, &y, 3, &p, 9).unwrap());
        assert!(a
            .groups
            .iter()
            .flat_map(|g| &g.trees)
            .all(|t| t.depth() <= 3));
    }

    #[test]
    fn rejects_bad_training() {
        let (x, _) = separable();
        let y = vec![0; x.len()];
        assert!(matches!(
            train_forest(&x, &y, 2, &ForestParams::default(), 0),
            Err(TsrError::SingleClassTraining)
        ));
        let mut x2 = x.clone();
        x2[3][7] = f64::NAN;
        let y2: Vec<usize> = (0..x.len()).map(|i| i % 2).collect();
        assert!(matches!(
            train_forest(&x2, &y2, 2, &ForestParams::default(), 0),
            Err(TsrError::NonFiniteFeature { sample: 3, dim: 7 })
        ));
    }

    #[test]
    fn vote_normalization() {
        assert_eq!(normalize_votes(&[2.0, 3.0, 5.0]), vec![0.2, 0.3, 0.5]);
        assert_eq!(normalize_votes(&[0.0, 4.0, 0.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_at_prediction() {
        let (x, y) = separable();
        let f = train_forest(
            &x,
            &y,
            2,
            &ForestParams {
                trees: 3,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            f.predict_prf(&[0.0; 4]),
            Err(TsrError::DimensionMismatch { .. })
        ));
    }

    /// Feature 0 alone separates the training classes; the remaining
    /// families separate them only statistically. A test point of class 0
    /// with feature 0 flipped is rescued by the family-restricted forests.
    #[test]
    fn feature_groups_suppress_a_dominating_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.35).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let mut row = vec![0.0; GLOBAL_DIM];
            row[0] = c as f64;
            for (d, v) in row.iter_mut().enumerate().skip(1) {
                *v = if d < 4 {
                    rng.random::<f64>()
                } else {
                    c as f64 + noise.sample(&mut rng)
                };
            }
            x.push(row);
            y.push(c);
        }
        let mut outlier = vec![0.0; GLOBAL_DIM];
        outlier[0] = 1.0;
        for v in outlier.iter_mut().take(4).skip(1) {
            *v = 0.5;
        }
        let grouped = train_forest(&x, &y, 2, &ForestParams::default(), 2).unwrap();
        let all_only = ForestParams {
            trees: 400,
            groups: vec![(0..GLOBAL_DIM).collect()],
            ..Default::default()
        };
        let flat = train_forest(&x, &y, 2, &all_only, 2).unwrap();
        let pg = grouped.predict_prf(&outlier).unwrap()[0];
        let pf = flat.predict_prf(&outlier).unwrap()[0];
        assert!(pg > pf, "grouped {pg} flat {pf}");
    }
}
