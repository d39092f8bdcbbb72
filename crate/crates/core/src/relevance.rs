//! Cluster relevance of a query: forest votes, neighbor votes, the joint
//! cost and its threshold.

use crate::error::{Result, TsrError};
use crate::forest::normalize_votes;

pub const PROBABILITY_FLOOR: f64 = 1e-6;

/// Forest relevance distribution of every gallery shape.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceTable {
    pub rows: Vec<Vec<f64>>,
}

impl RelevanceTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// `round(1.5 * n / m)`, at least 1 and at most `n`.
pub fn default_k(n: usize, m: usize) -> usize {
    if n == 0 || m == 0 {
        return 1;
    }
    ((1.5 * n as f64 / m as f64).round() as usize).clamp(1, n)
}

/// Indices of the `k` smallest distances, ties by index.
pub fn nearest(dists: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dists.len()).collect();
    idx.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Summed forest distributions of the query's `k` nearest gallery shapes,
/// renormalized.
pub fn predict_pknn(
    dists_to_gallery: &[f64],
    table: &RelevanceTable,
    k: usize,
) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(TsrError::EmptyGallery);
    }
    if dists_to_gallery.len() != table.len() {
        return Err(TsrError::DimensionMismatch {
            expected: table.len(),
            got: dists_to_gallery.len(),
        });
    }
    if k == 0 || k > table.len() {
        return Err(TsrError::InvalidConfig(format!(
            "K = {k} with {} gallery shapes",
            table.len()
        )));
    }
    let mut acc = vec![0.0; table.n_clusters()];
    for i in nearest(dists_to_gallery, k) {
        for (a, p) in acc.iter_mut().zip(&table.rows[i]) {
            *a += p;
        }
    }
    Ok(normalize_votes(&acc))
}

/// `-ln max(p_knn, floor) - ln max(p_rf, floor)`.
pub fn cost(p_rf: f64, p_knn: f64, floor: f64) -> f64 {
    -p_knn.max(floor).ln() - p_rf.max(floor).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelevantClusterSet {
    /// Joint cost of every cluster.
    pub costs: Vec<f64>,
    /// Clusters with cost below the threshold, ascending.
    pub clusters: Vec<usize>,
    pub fallback: bool,
}

/// Clusters whose joint cost is below `epsilon`.
pub fn relevant_clusters(
    p_rf: &[f64],
    p_knn: &[f64],
    epsilon: f64,
    floor: f64,
) -> Result<RelevantClusterSet> {
    if p_rf.len() != p_knn.len() {
        return Err(TsrError::DimensionMismatch {
            expected: p_rf.len(),
            got: p_knn.len(),
        });
    }
    let costs: Vec<f64> = p_rf
        .iter()
        .zip(p_knn)
        .map(|(&a, &b)| cost(a, b, floor))
        .collect();
    let clusters = (0..costs.len()).filter(|&k| costs[k] < epsilon).collect();
    Ok(RelevantClusterSet {
        costs,
        clusters,
        fallback: false,
    })
}

/// An empty set falls back to the single cheapest cluster (lowest index on
/// ties) and is flagged; a non-empty set is returned unchanged.
pub fn fallback(set: RelevantClusterSet) -> RelevantClusterSet {
    if !set.clusters.is_empty() || set.costs.is_empty() {
        return set;
    }
    let best = (0..set.costs.len())
        .min_by(|&a, &b| set.costs[a].total_cmp(&set.costs[b]).then(a.cmp(&b)))
        .expect("non-empty costs");
    RelevantClusterSet {
        clusters: vec![best],
        fallback: true,
        ..set
    }
}
