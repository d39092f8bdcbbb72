//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! (run with `--nocapture` to see passing ones) and fails when its criterion
//! does not hold. Dataset-backed criteria read `TSR_KIMIA99_DIR` and
//! `TSR_MPEG7_DIR` and fail when the data is not available.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsr_core::cluster::{adjusted_rand_index, spectral_cluster, ClusterParams};
use tsr_core::diffusion::{affinity_from_distance, lcdp, AffinityMatrix};
use tsr_core::eval::{
    bulls_eye, precision_recall, run_benchmark, top_n_consistency, BenchmarkOptions,
    BenchmarkReport, SelfInclusion,
};
use tsr_core::globalfeat::{
    extract_raw, geometric_features, prune_skeleton, salient_points, skeletonize, FeatureScaling,
    GlobalFeature, GlobalParams, SkeletonFeature,
};
use tsr_core::localfeat::{inner_distances, shape_samples, DistanceMatrix, LocalParams};
use tsr_core::pipeline::{
    build_index, query, stage_one, BuildConfig, QueryFeatures, QueryMode, RetrievalIndex,
};
use tsr_core::preprocess::{
    axis_ambiguity_gap, fill_holes, normalize, symmetry_profile, DEFAULT_SMOOTHING_SIGMA,
};
use tsr_core::relevance::{cost, relevant_clusters, PROBABILITY_FLOOR};
use tsr_core::shapeio::{load_dataset, save_index, Gallery, LabelRule, DEFAULT_THRESHOLD};
use tsr_core::synth::{
    confuser_index, disk_shape, ellipse_shape, gallery, invariance_fixtures, planted_distances,
    random_similarity, square_shape, Similarity,
};
use tsr_core::BinaryShape;

fn verdict(n: u32, what: &str, failures: &[String], detail: &str) {
    if failures.is_empty() {
        println!("criterion {n}: PASS  {what}  ({detail})");
    } else {
        println!("criterion {n}: FAIL  {what}  ({detail})");
        for f in failures {
            println!("    {f}");
        }
        panic!("criterion {n} failed: {}", failures.join("; "));
    }
}

fn raster(id: &str, f: impl Fn(usize, usize) -> bool) -> BinaryShape {
    BinaryShape::from_fn(id, 256, 256, f)
}

fn bar() -> BinaryShape {
    raster("bar", |x, y| {
        (40..216).contains(&x) && (120..134).contains(&y)
    })
}

fn plus() -> BinaryShape {
    raster("plus", |x, y| {
        ((40..216).contains(&x) && (120..136).contains(&y))
            || ((120..136).contains(&x) && (40..216).contains(&y))
    })
}

fn tee() -> BinaryShape {
    raster("tee", |x, y| {
        ((40..216).contains(&x) && (50..64).contains(&y))
            || ((121..135).contains(&x) && (50..220).contains(&y))
    })
}

fn counts(shape: &BinaryShape) -> SkeletonFeature {
    let p = GlobalParams::default();
    let n = normalize(shape, 256).unwrap();
    let sk = prune_skeleton(&skeletonize(&n).unwrap(), p.min_branch_frac);
    salient_points(&sk, p.turn_angle_deg, p.turn_arm, p.min_branch_frac)
}

/// Labels come from subdirectories when present, else from the file name
/// before the last dash, else from the name without trailing digits.
fn open_dataset(var: &str) -> Result<Gallery, String> {
    let dir = std::env::var_os(var)
        .map(PathBuf::from)
        .ok_or_else(|| format!("{var} is not set"))?;
    let entries: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    let rule = if entries.iter().any(|p| p.is_dir()) {
        LabelRule::ParentDirectory
    } else if entries.iter().any(|p| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.contains('-'))
    }) {
        LabelRule::PrefixBeforeLastDash
    } else {
        LabelRule::StripTrailingDigits
    };
    load_dataset(&dir, rule, DEFAULT_THRESHOLD, false)
        .map_err(|e| format!("{e} (GIF collections need `tsr convert` to PGM first)"))
}

fn small_gallery_index(seed: u64) -> RetrievalIndex {
    let shapes = gallery(&["bone", "star", "cup", "key"], 4, 0.5, seed);
    let config = BuildConfig {
        m: 4,
        seed,
        ..Default::default()
    };
    build_index(&shapes, &config, true).unwrap().0
}

#[test]
fn criterion_01_probability_normalization() {
    let mut failures = Vec::new();
    let idx = small_gallery_index(1);
    let (fixture, fq) = confuser_index(
        2,
        &BuildConfig {
            m: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for t in 0..1000 {
        let (index, base) = if t % 2 == 0 {
            let i = rng.random_range(0..idx.len());
            (&idx, QueryFeatures::of_member(&idx, i))
        } else {
            (&fixture, fq.clone())
        };
        let mut q = base;
        for v in q.global.0.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        for d in q.distances.iter_mut() {
            *d = *d * rng.random_range(0.5..1.5) + rng.random_range(0.0..0.05);
        }
        let (_, p_rf, p_knn) = stage_one(index, &q, 7.0).unwrap();
        for (name, p) in [("P_rf", &p_rf), ("P_knn", &p_knn)] {
            let dev = (p.iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(dev);
            if dev > 1e-9 || p.iter().any(|&v| v < 0.0) {
                failures.push(format!("query {t}: {name} sums to 1 + {dev:e}"));
            }
        }
    }
    verdict(
        1,
        "P_rf and P_knn sum to 1 +- 1e-9 over 1000 queries",
        &failures,
        &format!("max deviation {worst:e}"),
    );
}

#[test]
fn criterion_02_cost_laws() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let dist = |rng: &mut ChaCha8Rng, m: usize| -> Vec<f64> {
        // sparse draws so exact zeros and ones occur
        let mut v: Vec<f64> = (0..m)
            .map(|_| {
                if rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        if rng.random_bool(0.2) {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[rng.random_range(0..m)] = 1.0;
        }
        let s: f64 = v.iter().sum();
        if s == 0.0 {
            v[0] = 1.0;
            return v;
        }
        v.iter().map(|x| x / s).collect()
    };
    for t in 0..2000 {
        let m = rng.random_range(1..12);
        let (p, q) = (dist(&mut rng, m), dist(&mut rng, m));
        let (e1, e2) = (
            rng.random_range(0.0..30.0f64),
            rng.random_range(0.0..30.0f64),
        );
        let lo = relevant_clusters(&p, &q, e1.min(e2), PROBABILITY_FLOOR).unwrap();
        let hi = relevant_clusters(&p, &q, e1.max(e2), PROBABILITY_FLOOR).unwrap();
        if !lo.clusters.iter().all(|c| hi.clusters.contains(c)) {
            failures.push(format!(
                "instance {t}: relevant set not monotone in epsilon"
            ));
        }
        for k in 0..m {
            let j = lo.costs[k];
            if j.is_nan() || j < 0.0 {
                failures.push(format!("instance {t}: J = {j}"));
            }
            if (j == 0.0) != (p[k] == 1.0 && q[k] == 1.0) {
                failures.push(format!(
                    "instance {t}: J = {j} with p_rf {} p_knn {}",
                    p[k], q[k]
                ));
            }
        }
    }
    let u = vec![1.0 / 112.0; 112];
    let set = relevant_clusters(&u, &u, 7.0, PROBABILITY_FLOOR).unwrap();
    let target = 2.0 * 112f64.ln();
    let uniform = set.costs[0];
    if (uniform - target).abs() > 1e-6 || set.costs.iter().any(|&c| c != uniform) {
        failures.push(format!("uniform cost {uniform}, expected {target}"));
    }
    if (cost(1.0, 1.0, PROBABILITY_FLOOR)) != 0.0 {
        failures.push("J(1, 1) is not 0".into());
    }
    verdict(
        2,
        "J >= 0, J = 0 iff both 1, monotone in epsilon, uniform 2 ln 112",
        &failures,
        &format!("uniform J = {uniform:.6}"),
    );
}

#[test]
fn criterion_03_geometric_features() {
    let mut failures = Vec::new();
    let disk = geometric_features(
        &normalize(&disk_shape(64.0), 256).unwrap(),
        DEFAULT_SMOOTHING_SIGMA,
    )
    .unwrap();
    let square = geometric_features(
        &normalize(&square_shape(128), 256).unwrap(),
        DEFAULT_SMOOTHING_SIGMA,
    )
    .unwrap();
    if disk.circularity < 0.95 {
        failures.push(format!("disk circularity {}", disk.circularity));
    }
    if disk.solidity < 0.98 {
        failures.push(format!("disk solidity {}", disk.solidity));
    }
    if (disk.aspect_ratio - 1.0).abs() > 0.02 {
        failures.push(format!("disk aspect {}", disk.aspect_ratio));
    }
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    if (square.circularity - quarter_pi).abs() > 0.05 {
        failures.push(format!("square circularity {}", square.circularity));
    }
    verdict(
        3,
        "disk and square geometric features",
        &failures,
        &format!(
            "disk circ {:.4} sol {:.4} aspect {:.4}; square circ {:.4}",
            disk.circularity, disk.solidity, disk.aspect_ratio, square.circularity
        ),
    );
}

#[test]
fn criterion_04_skeleton_salient_points() {
    let mut failures = Vec::new();
    let sf = |t, e, j, c| SkeletonFeature {
        turning_pts: t,
        end_pts: e,
        t_junction_pts: j,
        cross_junction_pts: c,
    };
    let b = counts(&bar());
    if b != sf(0, 2, 0, 0) {
        failures.push(format!("bar {b:?}"));
    }
    let p = counts(&plus());
    if p.cross_junction_pts != 1 {
        failures.push(format!("plus {p:?}"));
    }
    let t = counts(&tee());
    if t.t_junction_pts != 1 {
        failures.push(format!("tee {t:?}"));
    }
    let mut shapes: Vec<BinaryShape> = vec![bar(), plus(), tee()];
    shapes.extend(
        invariance_fixtures()
            .iter()
            .map(|(name, f)| f.rasterize(name, Similarity::default())),
    );
    shapes.extend(gallery(&tsr_core::synth::CLASSES, 1, 0.5, 4));
    let frac = GlobalParams::default().min_branch_frac;
    for s in &shapes {
        let once = prune_skeleton(&skeletonize(&normalize(s, 256).unwrap()).unwrap(), frac);
        if prune_skeleton(&once, frac) != once {
            failures.push(format!("pruning {} is not idempotent", s.id));
        }
    }
    let mut detail = format!("bar {b:?}, {} shapes checked for idempotence", shapes.len());
    match open_dataset("TSR_MPEG7_DIR") {
        Err(e) => failures.push(format!("MPEG-7 bone/fish rows not checked: {e}")),
        Ok(g) => {
            for (id, want) in [("bone-1", sf(2, 2, 0, 0)), ("fish-1", sf(0, 2, 0, 0))] {
                match g
                    .shapes
                    .iter()
                    .find(|s| s.id == id || s.id.ends_with(&format!("/{id}")))
                {
                    None => failures.push(format!("{id} not found in the MPEG-7 directory")),
                    Some(s) => {
                        let got = counts(s);
                        detail.push_str(&format!(", {id} {:?}", got.as_array()));
                        if got != want {
                            failures.push(format!("{id}: got {got:?}, expected {want:?}"));
                        }
                    }
                }
            }
        }
    }
    verdict(
        4,
        "skeleton salient point counts and pruning idempotence",
        &failures,
        &detail,
    );
}

#[test]
fn criterion_05_normalization_invariance() {
    let mut failures = Vec::new();
    let params = GlobalParams::default();
    let fixtures = invariance_fixtures();
    let bases: Vec<_> = fixtures
        .iter()
        .map(|(name, f)| {
            let s = f.rasterize(name, Similarity::default());
            let gap = axis_ambiguity_gap(&symmetry_profile(&fill_holes(&s)));
            let n = normalize(&s, 256).unwrap();
            let raw = extract_raw(&n, &params).unwrap();
            (name, f, gap, n, raw)
        })
        .collect();
    let scaling = FeatureScaling::fit(bases.iter().map(|b| &b.4));
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (mut min_iou, mut max_dev, mut checked, mut excluded) = (1.0f64, 0.0f64, 0, 0);
    for (name, fig, gap, base, raw) in &bases {
        if *gap < 0.02 {
            excluded += 1;
            continue;
        }
        checked += 1;
        let g0 = GlobalFeature::from_raw(raw, &scaling).unwrap();
        for k in 0..10 {
            let t = random_similarity(&mut rng, (1.0, 1.0));
            let n = normalize(&fig.rasterize(name, t), 256).unwrap();
            let iou = base.grid.iou(&n.grid);
            let g = GlobalFeature::from_raw(&extract_raw(&n, &params).unwrap(), &scaling).unwrap();
            let dev =
                g0.0.iter()
                    .zip(&g.0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            min_iou = min_iou.min(iou);
            max_dev = max_dev.max(dev);
            if iou < 0.95 || dev > 0.05 {
                failures.push(format!(
                    "{name} transform {k} ({t:?}): IoU {iou:.4}, L-inf {dev:.4}"
                ));
            }
        }
    }
    verdict(
        5,
        "normalized IoU >= 0.95 and global L-inf <= 0.05 under rigid transforms",
        &failures,
        &format!("{checked} fixtures x 10, {excluded} excluded, min IoU {min_iou:.4}, max L-inf {max_dev:.4}"),
    );
}

#[test]
fn criterion_06_spectral_clustering_planted() {
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let (d, truth) = planted_distances(&[10, 14, 8], 5.0, 100 + seed);
        match spectral_cluster(&d, 3, seed, &ClusterParams::default()) {
            Ok(model) => {
                let ari = adjusted_rand_index(&model.assignment, &truth);
                if ari != 1.0 {
                    failures.push(format!("seed {seed}: ARI {ari}"));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    verdict(
        6,
        "planted 3-partition (gap ratio 5) recovered exactly for seeds 0-9",
        &failures,
        "ARI 1.0 required",
    );
}

#[test]
fn criterion_07_diffusion_laws() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for t in 0..50 {
        let n = rng.random_range(3..30);
        let d = DistanceMatrix::from_fn(n, |_, _| rng.random_range(0.0..3.0));
        let a = affinity_from_distance(&d, 7);
        let knn = rng.random_range(1..12);
        if lcdp(&a, knn, 0) != a {
            failures.push(format!("instance {t}: iters=0 is not the identity"));
        }
        let w = lcdp(&a, knn, 20);
        if (0..n).any(|i| (0..n).any(|j| w.get(i, j) != w.get(j, i))) {
            failures.push(format!("instance {t}: output not exactly symmetric"));
        }
        let cut = rng.random_range(1..n);
        let mut data = a.data.clone();
        for i in 0..n {
            for j in 0..n {
                if (i < cut) != (j < cut) {
                    data[i * n + j] = 0.0;
                }
            }
        }
        let w = lcdp(&AffinityMatrix { n, data }, knn, 20);
        if (0..n).any(|i| (0..n).any(|j| (i < cut) != (j < cut) && w.get(i, j) != 0.0)) {
            failures.push(format!("instance {t}: zero block filled in"));
        }
    }
    verdict(
        7,
        "diffusion identity, zero-block preservation, exact symmetry",
        &failures,
        "50 random instances",
    );
}

mod oracle {
    use std::collections::HashSet;

    pub fn bulls_eye(r: &[Vec<usize>], ql: &[usize], gl: &[usize], c: usize) -> f64 {
        let mut hit = 0;
        for (rank, &l) in r.iter().zip(ql) {
            let top: HashSet<usize> = rank[..2 * c].iter().copied().collect();
            hit += (0..gl.len())
                .filter(|g| gl[*g] == l && top.contains(g))
                .count();
        }
        100.0 * hit as f64 / (r.len() * c) as f64
    }

    pub fn top_n(r: &[Vec<usize>], ql: &[usize], gl: &[usize], n_max: usize) -> Vec<usize> {
        let mut out = vec![0; n_max];
        for (rank, &l) in r.iter().zip(ql) {
            for (n, o) in out.iter_mut().enumerate() {
                *o += usize::from(gl[rank[n]] == l);
            }
        }
        out
    }

    /// Precision at the first prefix whose recall reaches each level.
    pub fn pr(r: &[Vec<usize>], ql: &[usize], gl: &[usize], c: usize) -> Vec<(f64, f64)> {
        (1..=c)
            .map(|j| {
                let level = j as f64 / c as f64;
                let mut total = 0.0;
                for (rank, &l) in r.iter().zip(ql) {
                    let relevant = rank.iter().filter(|&&g| gl[g] == l).count();
                    if relevant == 0 {
                        continue;
                    }
                    if let Some(k) = (1..=rank.len()).find(|&k| {
                        rank[..k].iter().filter(|&&g| gl[g] == l).count() as f64 / relevant as f64
                            >= level - 1e-12
                    }) {
                        total +=
                            rank[..k].iter().filter(|&&g| gl[g] == l).count() as f64 / k as f64;
                    }
                }
                (level, total / r.len() as f64)
            })
            .collect()
    }
}

#[test]
fn criterion_08_metric_oracles() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for t in 0..100 {
        let (classes, c) = (rng.random_range(2..6), rng.random_range(2..7));
        let n = classes * c;
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        labels.shuffle(&mut rng);
        let rankings: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut r: Vec<usize> = (0..n).collect();
                r.shuffle(&mut rng);
                r
            })
            .collect();
        let be = bulls_eye(&rankings, &labels, &labels, c).unwrap();
        if (be - oracle::bulls_eye(&rankings, &labels, &labels, c)).abs() > 1e-9 {
            failures.push(format!("instance {t}: bull's eye {be}"));
        }
        let n_max = n.min(10);
        if top_n_consistency(&rankings, &labels, &labels, n_max).unwrap()
            != oracle::top_n(&rankings, &labels, &labels, n_max)
        {
            failures.push(format!("instance {t}: top-N differs"));
        }
        let a = precision_recall(&rankings, &labels, &labels, c);
        let b = oracle::pr(&rankings, &labels, &labels, c);
        if a.len() != b.len()
            || a.iter()
                .zip(&b)
                .any(|(x, y)| (x.0 - y.0).abs() > 1e-12 || (x.1 - y.1).abs() > 1e-12)
        {
            failures.push(format!("instance {t}: PR curve differs"));
        }
    }
    verdict(
        8,
        "bull's eye, top-N and PR equal brute-force recounts",
        &failures,
        "100 random instances",
    );
}

#[test]
fn criterion_09_inner_distance_law() {
    let mut failures = Vec::new();
    let params = LocalParams::default();
    let mut shapes: Vec<(BinaryShape, bool)> = invariance_fixtures()
        .iter()
        .map(|(name, f)| (f.rasterize(name, Similarity::default()), false))
        .collect();
    shapes.push((disk_shape(80.0), true));
    shapes.push((square_shape(150), true));
    shapes.push((ellipse_shape(100.0, 45.0, 30.0), true));
    let (mut pairs, mut worst_convex) = (0usize, 0.0f64);
    for (s, convex) in &shapes {
        let n = normalize(s, 256).unwrap();
        let pts = shape_samples(&n, &params).unwrap();
        let inner = inner_distances(&n.grid, &pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let e = pts.points[i].dist(pts.points[j]);
                let d = inner.get(i, j);
                pairs += 1;
                if d < e - 1e-9 {
                    failures.push(format!(
                        "{}: pair ({i},{j}) inner {d} < euclidean {e}",
                        s.id
                    ));
                }
                if *convex {
                    worst_convex = worst_convex.max(d - e);
                    if d - e > 1.0 {
                        failures.push(format!(
                            "{}: pair ({i},{j}) inner exceeds euclidean by {}",
                            s.id,
                            d - e
                        ));
                    }
                }
            }
        }
    }
    failures.truncate(10);
    verdict(
        9,
        "inner >= euclidean on all pairs, equal within 1 px on convex shapes",
        &failures,
        &format!(
            "{pairs} pairs, {} shapes, worst convex excess {worst_convex:.3} px",
            shapes.len()
        ),
    );
}

fn benchmark(index: &RetrievalIndex, mode: QueryMode, dataset: &str) -> BenchmarkReport {
    let opts = BenchmarkOptions {
        mode,
        topn_self: SelfInclusion::Exclude,
        dataset: dataset.into(),
        ..Default::default()
    };
    run_benchmark(index, &opts).unwrap()
}

#[test]
fn criterion_10_kimia99() {
    let mut failures = Vec::new();
    let detail = match open_dataset("TSR_KIMIA99_DIR") {
        Err(e) => {
            failures.push(format!("dataset not available: {e}"));
            String::from("not run")
        }
        Ok(g) => {
            let config = BuildConfig::preset("kimia99").unwrap();
            let (index, dropped) = build_index(&g.shapes, &config, false).unwrap();
            if index.len() != 99 || !dropped.is_empty() {
                failures.push(format!(
                    "{} shapes indexed, {} dropped",
                    index.len(),
                    dropped.len()
                ));
            }
            let base = benchmark(&index, QueryMode::LocalOnly, "kimia99");
            let tsr = benchmark(&index, QueryMode::TsrDp, "kimia99");
            let (b, t) = (&base.topn_consistency, &tsr.topn_consistency);
            if b[0] < 95 {
                failures.push(format!("IDSC top-1 {} < 95", b[0]));
            }
            if b[9] < 70 {
                failures.push(format!("IDSC top-10 {} < 70", b[9]));
            }
            for n in 0..10 {
                if t[n] < b[n] {
                    failures.push(format!("TSR top-{} {} below IDSC {}", n + 1, t[n], b[n]));
                }
            }
            if t[9] < 90 {
                failures.push(format!("TSR top-10 {} < 90", t[9]));
            }
            format!(
                "IDSC {b:?}; TSR {t:?}; own cluster kept {:.1}%",
                100.0 * tsr.own_cluster_rate()
            )
        }
    };
    verdict(
        10,
        "Kimia99 top-N: IDSC baseline and TSR (M=15, epsilon=7, diffusion)",
        &failures,
        &detail,
    );
}

#[test]
fn criterion_11_mpeg7_subset() {
    let mut failures = Vec::new();
    let detail = match open_dataset("TSR_MPEG7_DIR") {
        Err(e) => {
            failures.push(format!("dataset not available: {e}"));
            String::from("not run")
        }
        Ok(g) => {
            let mut by_class: BTreeMap<String, Vec<BinaryShape>> = BTreeMap::new();
            for s in g.shapes {
                by_class
                    .entry(s.label.clone().unwrap_or_default())
                    .or_default()
                    .push(s);
            }
            let subset: Vec<BinaryShape> = by_class
                .into_values()
                .filter(|v| v.len() >= 20)
                .take(10)
                .flat_map(|v| v.into_iter().take(20))
                .collect();
            if subset.len() != 200 {
                failures.push(format!("only {} shapes in 10 classes of 20", subset.len()));
            }
            let config = BuildConfig {
                m: 16,
                ..Default::default()
            };
            let (index, _) = build_index(&subset, &config, false).unwrap();
            let base = benchmark(&index, QueryMode::LocalDp, "mpeg7-subset").bulls_eye;
            let tsr = benchmark(&index, QueryMode::TsrDp, "mpeg7-subset").bulls_eye;
            if tsr < base + 1.0 {
                failures.push(format!(
                    "TSR bull's eye {tsr:.2}% is not 1 point above IDSC+DP {base:.2}%"
                ));
            }
            format!("IDSC+DP {base:.2}%, TSR {tsr:.2}%")
        }
    };
    verdict(
        11,
        "MPEG-7 10x20 subset: TSR bull's eye >= IDSC+DP + 1 point",
        &failures,
        &detail,
    );
}

#[test]
fn criterion_12_dual_axis_rejects_confuser() {
    let mut failures = Vec::new();
    let config = BuildConfig {
        m: 3,
        ..Default::default()
    };
    let mut details = Vec::new();
    for seed in 0..5 {
        let (index, q) = confuser_index(seed, &config).unwrap();
        let confuser_cluster = index.clusters.assignment[index
            .labels
            .iter()
            .position(|l| l.as_deref() == Some("confuser"))
            .unwrap()];
        let (set, _, p_knn) = stage_one(&index, &q, config.epsilon).unwrap();
        let k = set.clusters.len();
        let mut by_local: Vec<usize> = (0..p_knn.len()).collect();
        by_local.sort_by(|&a, &b| {
            cost(1.0, p_knn[a], config.floor)
                .total_cmp(&cost(1.0, p_knn[b], config.floor))
                .then(a.cmp(&b))
        });
        let single: HashSet<usize> = by_local[..k].iter().copied().collect();
        if set.clusters.contains(&confuser_cluster) {
            failures.push(format!(
                "seed {seed}: joint cost keeps the confuser (J = {:.3})",
                set.costs[confuser_cluster]
            ));
        }
        if !single.contains(&confuser_cluster) {
            failures.push(format!(
                "seed {seed}: local-only threshold with {k} clusters drops the confuser too"
            ));
        }
        let top = |mode| {
            let r = query(&index, &q, mode, None, true).unwrap();
            r.ranking[..10]
                .iter()
                .filter(|s| index.clusters.assignment[s.index] == confuser_cluster)
                .count()
        };
        let (tsr, local) = (top(QueryMode::Tsr), top(QueryMode::LocalOnly));
        if tsr >= local {
            failures.push(format!(
                "seed {seed}: confusers in top 10: tsr {tsr}, local-only {local}"
            ));
        }
        details.push(format!(
            "J_conf {:.2} top10 {tsr}/{local}",
            set.costs[confuser_cluster]
        ));
    }
    verdict(
        12,
        "joint cost rejects a near-local far-global confuser cluster",
        &failures,
        &details.join("; "),
    );
}

fn report_bytes(r: &BenchmarkReport) -> String {
    [
        r.summary(false),
        r.bulls_eye_csv(),
        r.topn_csv(),
        r.pr_csv(),
        r.queries_csv(),
    ]
    .concat()
}

#[test]
fn criterion_13_determinism() {
    let mut failures = Vec::new();
    let detail = match open_dataset("TSR_KIMIA99_DIR") {
        Err(e) => {
            failures.push(format!("dataset not available: {e}"));
            String::from("not run")
        }
        Ok(g) => {
            let dir = tempfile::tempdir().unwrap();
            let config = BuildConfig::preset("kimia99").unwrap();
            let mut files = Vec::new();
            let mut reports = Vec::new();
            for run in 0..2 {
                let (index, _) = build_index(&g.shapes, &config, false).unwrap();
                let path: PathBuf = dir.path().join(format!("run{run}.idx"));
                save_index(&index, &path).unwrap();
                files.push(std::fs::read(Path::new(&path)).unwrap());
                reports.push(report_bytes(&benchmark(
                    &index,
                    QueryMode::TsrDp,
                    "kimia99",
                )));
            }
            if files[0] != files[1] {
                failures.push("index files differ".into());
            }
            if reports[0] != reports[1] {
                failures.push("benchmark reports differ".into());
            }
            format!("index {} bytes", files[0].len())
        }
    };
    verdict(
        13,
        "two Kimia99 builds give byte-identical index files and reports",
        &failures,
        &detail,
    );
}
