//! Retrieval metrics and the benchmark runner.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Result, TsrError};
use crate::pipeline::{query, QueryFeatures, QueryMode, RetrievalIndex};

/// Whether a query's own gallery entry stays in its ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelfInclusion {
    Include,
    Exclude,
}

impl std::str::FromStr for SelfInclusion {
    type Err = TsrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "include" => Ok(SelfInclusion::Include),
            "exclude" => Ok(SelfInclusion::Exclude),
            _ => Err(TsrError::InvalidConfig(format!(
                "self-inclusion must be include or exclude, got {s}"
            ))),
        }
    }
}

fn check_len(q: usize, ranking: &[usize], needed: usize) -> Result<()> {
    if ranking.len() < needed {
        return Err(TsrError::RankingTooShort {
            query: q,
            len: ranking.len(),
            needed,
        });
    }
    Ok(())
}

/// Same-class hits among the first `window` entries.
fn hits<L: PartialEq>(ranking: &[usize], window: usize, label: &L, gallery: &[L]) -> usize {
    ranking[..window]
        .iter()
        .filter(|&&g| gallery[g] == *label)
        .count()
}

/// Percentage of same-class shapes found in the top `2c` of each ranking,
/// out of `c` per query. Rankings hold gallery indices.
pub fn bulls_eye<L: PartialEq>(
    rankings: &[Vec<usize>],
    query_labels: &[L],
    gallery_labels: &[L],
    c: usize,
) -> Result<f64> {
    if rankings.len() != query_labels.len() {
        return Err(TsrError::DimensionMismatch {
            expected: query_labels.len(),
            got: rankings.len(),
        });
    }
    if rankings.is_empty() || c == 0 {
        return Ok(0.0);
    }
    let mut total = 0;
    for (q, (r, l)) in rankings.iter().zip(query_labels).enumerate() {
        check_len(q, r, 2 * c)?;
        total += hits(r, 2 * c, l, gallery_labels);
    }
    Ok(100.0 * total as f64 / (rankings.len() * c) as f64)
}

/// For N in `1..=n_max`, the number of queries whose N-th retrieved shape
/// shares the query's class.
pub fn top_n_consistency<L: PartialEq>(
    rankings: &[Vec<usize>],
    query_labels: &[L],
    gallery_labels: &[L],
    n_max: usize,
) -> Result<Vec<usize>> {
    if rankings.len() != query_labels.len() {
        return Err(TsrError::DimensionMismatch {
            expected: query_labels.len(),
            got: rankings.len(),
        });
    }
    let mut counts = vec![0; n_max];
    for (q, (r, l)) in rankings.iter().zip(query_labels).enumerate() {
        check_len(q, r, n_max)?;
        for (n, count) in counts.iter_mut().enumerate() {
            if gallery_labels[r[n]] == *l {
                *count += 1;
            }
        }
    }
    Ok(counts)
}

/// Mean precision at recall levels `1/c, 2/c, ..., 1`. A query reaches a
/// level at the first rank where its recall (over the relevant shapes in its
/// ranking) is at least that level; a level never reached counts as zero.
pub fn precision_recall<L: PartialEq>(
    rankings: &[Vec<usize>],
    query_labels: &[L],
    gallery_labels: &[L],
    c: usize,
) -> Vec<(f64, f64)> {
    let mut acc = vec![0.0; c];
    for (r, l) in rankings.iter().zip(query_labels) {
        let relevant = r.iter().filter(|&&g| gallery_labels[g] == *l).count();
        if relevant == 0 {
            continue;
        }
        let mut tp = 0;
        let mut level = 0;
        for (rank, &g) in r.iter().enumerate() {
            if gallery_labels[g] != *l {
                continue;
            }
            tp += 1;
            let precision = tp as f64 / (rank + 1) as f64;
            // levels j/c with j/c <= tp/relevant, i.e. j * relevant <= tp * c
            while level < c && (level + 1) * relevant <= tp * c {
                acc[level] += precision;
                level += 1;
            }
        }
    }
    let q = rankings.len().max(1) as f64;
    acc.into_iter()
        .enumerate()
        .map(|(j, a)| ((j + 1) as f64 / c as f64, a / q))
        .collect()
}

/// Largest class size among the labels.
pub fn class_size<L: Eq + std::hash::Hash>(labels: &[L]) -> usize {
    let mut counts = std::collections::HashMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts.into_values().max().unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryDiagnostic {
    pub query: usize,
    pub id: String,
    /// Same-class shapes in the bull's eye window.
    pub hits: usize,
    pub included: usize,
    pub fallback: bool,
    /// Whether the shape's own cluster passed Stage I.
    pub own_cluster_relevant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub config: String,
    pub mode: QueryMode,
    pub class_size: usize,
    pub bulls_eye: f64,
    pub topn_consistency: Vec<usize>,
    pub pr_curve: Vec<(f64, f64)>,
    pub queries: Vec<QueryDiagnostic>,
    pub fallback_count: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOptions {
    pub mode: QueryMode,
    pub epsilon: Option<f64>,
    /// Convention for the top-N count; bull's eye always keeps the query.
    pub topn_self: SelfInclusion,
    pub n_max: usize,
    pub dataset: String,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            mode: QueryMode::TsrDp,
            epsilon: None,
            topn_self: SelfInclusion::Exclude,
            n_max: 10,
            dataset: String::new(),
        }
    }
}

/// Queries every gallery shape against its own index and scores the
/// full-length rankings against the stored labels.
pub fn run_benchmark(index: &RetrievalIndex, opts: &BenchmarkOptions) -> Result<BenchmarkReport> {
    let n = index.len();
    if n == 0 {
        return Err(TsrError::EmptyGallery);
    }
    let labels: Vec<String> = index
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.clone().ok_or_else(|| {
                TsrError::InvalidConfig(format!("gallery shape {} has no label", index.ids[i]))
            })
        })
        .collect::<Result<_>>()?;
    let start = Instant::now();
    let results = (0..n)
        .into_par_iter()
        .map(|i| {
            query(
                index,
                &QueryFeatures::of_member(index, i),
                opts.mode,
                opts.epsilon,
                true,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let rankings: Vec<Vec<usize>> = results
        .iter()
        .map(|r| r.ranking.iter().map(|s| s.index).collect())
        .collect();
    let c = class_size(&labels);
    let bulls_eye = bulls_eye(&rankings, &labels, &labels, c)?;
    let topn_rankings: Vec<Vec<usize>> = match opts.topn_self {
        SelfInclusion::Include => rankings.clone(),
        SelfInclusion::Exclude => rankings
            .iter()
            .enumerate()
            .map(|(q, r)| r.iter().copied().filter(|&g| g != q).collect())
            .collect(),
    };
    let topn_consistency = top_n_consistency(
        &topn_rankings,
        &labels,
        &labels,
        opts.n_max.min(n.saturating_sub(1)).max(1),
    )?;
    let pr_curve = precision_recall(&topn_rankings, &labels, &labels, c);
    let window = (2 * c).min(n);
    let queries: Vec<QueryDiagnostic> = results
        .iter()
        .enumerate()
        .map(|(i, r)| QueryDiagnostic {
            query: i,
            id: index.ids[i].clone(),
            hits: hits(&rankings[i], window, &labels[i], &labels),
            included: r.included,
            fallback: r.fallback,
            own_cluster_relevant: r.relevant.clusters.contains(&index.clusters.assignment[i]),
        })
        .collect();
    Ok(BenchmarkReport {
        dataset: opts.dataset.clone(),
        config: format!(
            "M={} K={} epsilon={} seed={}",
            index.config.m,
            index.config.neighbors(n),
            opts.epsilon.unwrap_or(index.config.epsilon),
            index.config.seed
        ),
        mode: opts.mode,
        class_size: c,
        bulls_eye,
        topn_consistency,
        pr_curve,
        fallback_count: queries.iter().filter(|q| q.fallback).count(),
        queries,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl BenchmarkReport {
    /// Queries with the fewest bull's eye hits, ties by index.
    pub fn worst_queries(&self, count: usize) -> Vec<&QueryDiagnostic> {
        let mut v: Vec<&QueryDiagnostic> = self.queries.iter().collect();
        v.sort_by_key(|q| (q.hits, q.query));
        v.truncate(count);
        v
    }

    pub fn own_cluster_rate(&self) -> f64 {
        self.queries
            .iter()
            .filter(|q| q.own_cluster_relevant)
            .count() as f64
            / self.queries.len().max(1) as f64
    }

    /// Human-readable summary; timings only when asked for.
    pub fn summary(&self, with_timing: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset: {}", self.dataset);
        let _ = writeln!(s, "config: {}", self.config);
        let _ = writeln!(s, "mode: {}", self.mode.name());
        let _ = writeln!(
            s,
            "queries: {}  class size: {}",
            self.queries.len(),
            self.class_size
        );
        let _ = writeln!(s, "bull's eye: {:.2}%", self.bulls_eye);
        let counts: Vec<String> = self
            .topn_consistency
            .iter()
            .map(|c| c.to_string())
            .collect();
        let _ = writeln!(s, "top-N consistency: {}", counts.join(" "));
        let _ = writeln!(s, "fallbacks: {}", self.fallback_count);
        let _ = writeln!(
            s,
            "own cluster kept: {:.1}%",
            100.0 * self.own_cluster_rate()
        );
        let worst: Vec<String> = self
            .worst_queries(5)
            .iter()
            .map(|q| format!("{}({})", q.id, q.hits))
            .collect();
        let _ = writeln!(s, "worst queries: {}", worst.join(" "));
        if with_timing {
            let _ = writeln!(s, "time: {:.2}s", self.seconds);
        }
        s
    }

    pub fn bulls_eye_csv(&self) -> String {
        format!(
            "mode,class_size,bulls_eye\n{},{},{:.6}\n",
            self.mode.name(),
            self.class_size,
            self.bulls_eye
        )
    }

    pub fn topn_csv(&self) -> String {
        let mut s = String::from("n,count\n");
        for (i, c) in self.topn_consistency.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, c);
        }
        s
    }

    pub fn pr_csv(&self) -> String {
        let mut s = String::from("recall,precision\n");
        for (r, p) in &self.pr_curve {
            let _ = writeln!(s, "{r:.6},{p:.6}");
        }
        s
    }

    pub fn queries_csv(&self) -> String {
        let mut s = String::from("query,id,hits,included,fallback,own_cluster_relevant\n");
        for q in &self.queries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                q.query, q.id, q.hits, q.included, q.fallback, q.own_cluster_relevant
            );
        }
        s
    }

    /// Writes `summary.txt` and one CSV per metric into `dir`.
    pub fn write_files(&self, dir: &Path, with_timing: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| TsrError::io(dir, e))?;
        for (name, body) in [
            ("summary.txt", self.summary(with_timing)),
            ("bullseye.csv", self.bulls_eye_csv()),
            ("topn.csv", self.topn_csv()),
            ("pr.csv", self.pr_csv()),
            ("queries.csv", self.queries_csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| TsrError::io(&p, e))?;
        }
        Ok(())
    }
}
