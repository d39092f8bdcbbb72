//! Offline index construction and two-stage online querying.

use rayon::prelude::*;

use crate::cluster::{spectral_cluster, ClusterModel, ClusterParams};
use crate::diffusion::{affinity_from_distance, constrained_lcdp, DiffusionParams};
use crate::error::{Result, TsrError};
use crate::forest::{train_forest, ForestEnsemble, ForestParams};
use crate::globalfeat::{
    extract_raw, FeatureScaling, GlobalFeature, GlobalParams, RawGlobalFeature,
};
use crate::localfeat::{
    distance_matrix, distances_to, idsc_descriptor, DistanceMatrix, LocalDescriptor, LocalParams,
};
use crate::preprocess::{normalize, DEFAULT_RASTER};
use crate::relevance::{
    default_k, fallback, predict_pknn, relevant_clusters, RelevanceTable, RelevantClusterSet,
    PROBABILITY_FLOOR,
};
use crate::shapeio::BinaryShape;

#[derive(Clone, Debug, PartialEq)]
pub struct BuildConfig {
    pub m: usize,
    pub raster: usize,
    pub global: GlobalParams,
    pub local: LocalParams,
    pub cluster: ClusterParams,
    pub forest: ForestParams,
    /// Neighbor count for the neighbor vote; `None` means
    /// `round(1.5 * N / M)`.
    pub k: Option<usize>,
    pub epsilon: f64,
    pub floor: f64,
    pub diffusion: DiffusionParams,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            m: 15,
            raster: DEFAULT_RASTER,
            global: GlobalParams::default(),
            local: LocalParams::default(),
            cluster: ClusterParams::default(),
            forest: ForestParams::default(),
            k: None,
            epsilon: 7.0,
            floor: PROBABILITY_FLOOR,
            diffusion: DiffusionParams::default(),
            seed: 0,
        }
    }
}

impl BuildConfig {
    /// Cluster counts used for the standard benchmarks.
    pub fn preset(dataset: &str) -> Option<Self> {
        let m = match dataset.to_ascii_lowercase().as_str() {
            "kimia99" => 15,
            "mpeg7" => 112,
            "tari1000" => 75,
            _ => return None,
        };
        Some(BuildConfig {
            m,
            ..Default::default()
        })
    }

    pub fn neighbors(&self, n: usize) -> usize {
        self.k
            .unwrap_or_else(|| default_k(n, self.m))
            .clamp(1, n.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TsrError::InvalidConfig(m.to_string()));
        if self.m == 0 {
            return bad("M must be at least 1");
        }
        if self.raster < 16 {
            return bad("raster must be at least 16");
        }
        if self.local.n_samples < 3 || self.local.n_dist == 0 || self.local.n_angle == 0 {
            return bad("descriptor needs at least 3 samples and one bin per axis");
        }
        if self.epsilon.is_nan() || !(self.floor > 0.0 && self.floor <= 1.0) {
            return bad("epsilon must be a number and the floor in (0, 1]");
        }
        if self.k == Some(0) {
            return bad("K must be at least 1");
        }
        Ok(())
    }
}

/// Everything needed to answer queries against one gallery.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    pub config: BuildConfig,
    pub ids: Vec<String>,
    /// Ground truth carried for evaluation; never read while building.
    pub labels: Vec<Option<String>>,
    pub raw_global: Vec<RawGlobalFeature>,
    pub scaling: FeatureScaling,
    pub global: Vec<GlobalFeature>,
    pub descriptors: Vec<LocalDescriptor>,
    pub distances: DistanceMatrix,
    pub clusters: ClusterModel,
    pub forest: ForestEnsemble,
    pub relevance: RelevanceTable,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Clustering on local distances, forests on the members nearest each
/// medoid, and the forest relevance of every gallery shape.
pub fn train_stage_one(
    global: &[GlobalFeature],
    distances: &DistanceMatrix,
    config: &BuildConfig,
) -> Result<(ClusterModel, ForestEnsemble, RelevanceTable)> {
    let n = global.len();
    if distances.len() != n {
        return Err(TsrError::DimensionMismatch {
            expected: n,
            got: distances.len(),
        });
    }
    if config.m > n {
        return Err(TsrError::InvalidM { m: config.m, n });
    }
    log::info!("clustering {n} shapes into {}", config.m);
    let clusters = spectral_cluster(distances, config.m, config.seed, &config.cluster)?;
    let (tx, ty): (Vec<GlobalFeature>, Vec<usize>) = clusters
        .training_set
        .iter()
        .map(|&(i, c)| (global[i], c))
        .unzip();
    let forest = train_forest(&tx, &ty, clusters.m, &config.forest, config.seed)?;
    let relevance = RelevanceTable {
        rows: global
            .iter()
            .map(|g| forest.predict_prf(g.as_slice()))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok((clusters, forest, relevance))
}

/// Shapes dropped from a lenient build, with the reason.
pub type BuildFailures = Vec<(String, String)>;

struct ShapeFeatures {
    raw: RawGlobalFeature,
    desc: LocalDescriptor,
}

fn shape_features(shape: &BinaryShape, config: &BuildConfig) -> Result<ShapeFeatures> {
    let n = normalize(shape, config.raster)?;
    Ok(ShapeFeatures {
        raw: extract_raw(&n, &config.global)?,
        desc: idsc_descriptor(&n, &config.local)?,
    })
}

/// Features, local distances, clustering, forests and relevance table of a
/// gallery. With `strict`, the first per-shape failure aborts the build;
/// otherwise failing shapes are left out and reported.
pub fn build_index(
    gallery: &[BinaryShape],
    config: &BuildConfig,
    strict: bool,
) -> Result<(RetrievalIndex, BuildFailures)> {
    config.validate()?;
    if gallery.is_empty() {
        return Err(TsrError::EmptyGallery);
    }
    let extracted: Vec<Result<ShapeFeatures>> = gallery
        .par_iter()
        .map(|s| shape_features(s, config))
        .collect();
    let mut kept = Vec::new();
    let mut feats = Vec::new();
    let mut failures = Vec::new();
    for (shape, r) in gallery.iter().zip(extracted) {
        match r {
            Ok(f) => {
                kept.push(shape);
                feats.push(f);
            }
            Err(e) if !strict => {
                log::warn!("leaving out {}: {e}", shape.id);
                failures.push((shape.id.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let n = kept.len();
    if n == 0 {
        return Err(TsrError::EmptyGallery);
    }
    if config.m > n {
        return Err(TsrError::InvalidM { m: config.m, n });
    }
    let raw_global: Vec<RawGlobalFeature> = feats.iter().map(|f| f.raw).collect();
    let scaling = FeatureScaling::fit(&raw_global);
    let global = raw_global
        .iter()
        .enumerate()
        .map(|(i, r)| {
            GlobalFeature::from_raw(r, &scaling).map_err(|e| match e {
                TsrError::NonFiniteFeature { dim, .. } => {
                    TsrError::NonFiniteFeature { sample: i, dim }
                }
                e => e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let descriptors: Vec<LocalDescriptor> = feats.into_iter().map(|f| f.desc).collect();
    log::info!("computing {} pairwise local distances", n * (n - 1) / 2);
    let distances = distance_matrix(&descriptors, &config.local)?;
    let (clusters, forest, relevance) = train_stage_one(&global, &distances, config)?;
    let index = RetrievalIndex {
        config: config.clone(),
        ids: kept.iter().map(|s| s.id.clone()).collect(),
        labels: kept.iter().map(|s| s.label.clone()).collect(),
        raw_global,
        scaling,
        global,
        descriptors,
        distances,
        clusters,
        forest,
        relevance,
    };
    Ok((index, failures))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryMode {
    Tsr,
    TsrDp,
    LocalOnly,
    LocalDp,
}

impl QueryMode {
    pub const ALL: [QueryMode; 4] = [
        QueryMode::Tsr,
        QueryMode::TsrDp,
        QueryMode::LocalOnly,
        QueryMode::LocalDp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryMode::Tsr => "tsr",
            QueryMode::TsrDp => "tsr+dp",
            QueryMode::LocalOnly => "local-only",
            QueryMode::LocalDp => "local+dp",
        }
    }

    pub fn uses_filtering(self) -> bool {
        matches!(self, QueryMode::Tsr | QueryMode::TsrDp)
    }

    pub fn uses_diffusion(self) -> bool {
        matches!(self, QueryMode::TsrDp | QueryMode::LocalDp)
    }
}

impl std::str::FromStr for QueryMode {
    type Err = TsrError;
    fn from_str(s: &str) -> Result<Self> {
        QueryMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TsrError::InvalidConfig(format!("unknown query mode {s}")))
    }
}

/// Features of a query shape in the index's feature spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryFeatures {
    pub id: String,
    pub global: GlobalFeature,
    /// Local matching distance to every gallery shape.
    pub distances: Vec<f64>,
}

impl QueryFeatures {
    pub fn extract(index: &RetrievalIndex, shape: &BinaryShape) -> Result<Self> {
        let f = shape_features(shape, &index.config)?;
        if f.desc.n != index.config.local.n_samples {
            return Err(TsrError::IncompatibleIndex(
                "descriptor size differs from the index".into(),
            ));
        }
        Ok(QueryFeatures {
            id: shape.id.clone(),
            global: GlobalFeature::from_raw(&f.raw, &index.scaling)?,
            distances: distances_to(&f.desc, &index.descriptors, &index.config.local)?,
        })
    }

    /// A gallery member queried against its own index.
    pub fn of_member(index: &RetrievalIndex, i: usize) -> Self {
        QueryFeatures {
            id: index.ids[i].clone(),
            global: index.global[i],
            distances: index.distances.row(i).to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedShape {
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub query_id: String,
    pub mode: QueryMode,
    /// Stage I outcome; every cluster is relevant in the local-only modes.
    pub relevant: RelevantClusterSet,
    pub p_rf: Vec<f64>,
    pub p_knn: Vec<f64>,
    /// Shapes in relevant clusters by descending score (negated local
    /// distance, or diffused similarity), ties by gallery index. With a full
    /// ranking the remaining shapes follow by ascending local distance,
    /// starting at position `included`.
    pub ranking: Vec<RankedShape>,
    pub included: usize,
    pub fallback: bool,
}

/// Stage I: forest and neighbor votes, joint costs, threshold, fallback.
pub fn stage_one(
    index: &RetrievalIndex,
    q: &QueryFeatures,
    epsilon: f64,
) -> Result<(RelevantClusterSet, Vec<f64>, Vec<f64>)> {
    let p_rf = index.forest.predict_prf(q.global.as_slice())?;
    let p_knn = predict_pknn(
        &q.distances,
        &index.relevance,
        index.config.neighbors(index.len()),
    )?;
    let set = fallback(relevant_clusters(
        &p_rf,
        &p_knn,
        epsilon,
        index.config.floor,
    )?);
    Ok((set, p_rf, p_knn))
}

fn by_score(mut v: Vec<RankedShape>) -> Vec<RankedShape> {
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    v
}

/// Diffused similarity of the query (appended as the last point) to the
/// gallery shapes in `members`.
fn diffused_scores(index: &RetrievalIndex, q: &QueryFeatures, members: &[usize]) -> Vec<f64> {
    let n = index.len();
    let ext = index.distances.extended(&q.distances);
    let a = affinity_from_distance(&ext, index.config.diffusion.kernel_k);
    let mut subset = members.to_vec();
    subset.push(n);
    let p = &index.config.diffusion;
    let w = constrained_lcdp(&a, &subset, p.knn_w, p.iters);
    let qi = subset.len() - 1;
    (0..members.len()).map(|k| w.get(qi, k)).collect()
}

/// Two-stage query. `epsilon` overrides the index threshold when given.
pub fn query(
    index: &RetrievalIndex,
    q: &QueryFeatures,
    mode: QueryMode,
    epsilon: Option<f64>,
    full_ranking: bool,
) -> Result<QueryResult> {
    let n = index.len();
    if q.distances.len() != n {
        return Err(TsrError::IncompatibleIndex(format!(
            "query has {} distances for {n} gallery shapes",
            q.distances.len()
        )));
    }
    let eps = epsilon.unwrap_or(index.config.epsilon);
    let (mut relevant, p_rf, p_knn) = stage_one(index, q, eps)?;
    if !mode.uses_filtering() {
        relevant = RelevantClusterSet {
            clusters: (0..index.clusters.m).collect(),
            fallback: false,
            ..relevant
        };
    }
    let mut keep = vec![false; index.clusters.m];
    for &c in &relevant.clusters {
        keep[c] = true;
    }
    let members: Vec<usize> = (0..n)
        .filter(|&i| keep[index.clusters.assignment[i]])
        .collect();
    let scores = if mode.uses_diffusion() {
        diffused_scores(index, q, &members)
    } else {
        members.iter().map(|&i| -q.distances[i]).collect()
    };
    let mut ranking = by_score(
        members
            .iter()
            .zip(scores)
            .map(|(&index, score)| RankedShape { index, score })
            .collect(),
    );
    let included = ranking.len();
    if full_ranking {
        let rest: Vec<RankedShape> = (0..n)
            .filter(|&i| !keep[index.clusters.assignment[i]])
            .map(|i| RankedShape {
                index: i,
                score: -q.distances[i],
            })
            .collect();
        ranking.extend(by_score(rest));
    }
    Ok(QueryResult {
        query_id: q.id.clone(),
        mode,
        fallback: relevant.fallback,
        relevant,
        p_rf,
        p_knn,
        ranking,
        included,
    })
}

/// Convenience wrapper extracting the query features first.
pub fn query_shape(
    index: &RetrievalIndex,
    shape: &BinaryShape,
    mode: QueryMode,
    epsilon: Option<f64>,
    top: Option<usize>,
) -> Result<QueryResult> {
    let q = QueryFeatures::extract(index, shape)?;
    let mut r = query(index, &q, mode, epsilon, false)?;
    if let Some(t) = top {
        r.ranking.truncate(t);
    }
    Ok(r)
}
