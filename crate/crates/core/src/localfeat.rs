//! Inner-distance shape context (IDSC) descriptors and their matching
//! distance.

use rayon::prelude::*;

use crate::error::{Result, TsrError};
use crate::geom::Point;
use crate::preprocess::{
    extract_contour, smooth_contour, Contour, NormalizedShape, DEFAULT_SMOOTHING_SIGMA,
};
use crate::shapeio::BinaryShape;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalParams {
    pub n_samples: usize,
    pub n_dist: usize,
    pub n_angle: usize,
    pub skip_penalty: f64,
    pub shifts: usize,
    pub smoothing_sigma: f64,
}

impl Default for LocalParams {
    fn default() -> Self {
        LocalParams {
            n_samples: 100,
            n_dist: 8,
            n_angle: 12,
            skip_penalty: 0.3,
            shifts: 8,
            smoothing_sigma: DEFAULT_SMOOTHING_SIGMA,
        }
    }
}

/// Log-distance bin edges span `[1/8, 2]` times the mean inner distance;
/// values outside fall into the first or last bin.
const LOG_DIST_RANGE: (f64, f64) = (0.125, 2.0);

/// Points spaced equally by arc length along a closed contour.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourSamples {
    pub points: Vec<Point>,
    /// Unit tangent at each sample, in contour order.
    pub tangents: Vec<Point>,
}

impl ContourSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Resample `contour` at `n` arc-length-uniform positions starting from its
/// first point.
pub fn sample_contour(contour: &Contour, n: usize) -> Result<ContourSamples> {
    let m = contour.len();
    if n == 0 || m < n || m < 2 {
        return Err(TsrError::TooFewContourPixels {
            available: m,
            requested: n,
        });
    }
    let pts = &contour.points;
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for i in 0..m {
        let d = pts[i].dist(pts[(i + 1) % m]);
        cum.push(cum[i] + d);
    }
    let total = cum[m];
    let mut points = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let t = total * k as f64 / n as f64;
        while seg + 1 < m && cum[seg + 1] <= t {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > 0.0 { (t - cum[seg]) / len } else { 0.0 };
        let (a, b) = (pts[seg], pts[(seg + 1) % m]);
        points.push(a + (b - a) * f);
    }
    let tangents = (0..n)
        .map(|k| {
            let d = points[(k + 1) % n] - points[(k + n - 1) % n];
            let len = d.norm();
            if len > 0.0 {
                d * (1.0 / len)
            } else {
                Point::new(1.0, 0.0)
            }
        })
        .collect();
    Ok(ContourSamples { points, tangents })
}

/// Shape membership test tolerant to the half-pixel offset of smoothed
/// contour points: a position counts as inside when its nearest pixel is
/// foreground or touches foreground.
struct Interior {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl Interior {
    fn new(shape: &BinaryShape) -> Self {
        let (w, h) = (shape.width, shape.height);
        let mut mask = vec![false; w * h];
        for (x, y) in shape.foreground() {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        mask[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
        Interior {
            width: w,
            height: h,
            mask,
        }
    }

    fn contains(&self, p: Point) -> bool {
        let (x, y) = (p.x.round(), p.y.round());
        x >= 0.0
            && y >= 0.0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.mask[y as usize * self.width + x as usize]
    }

    /// Segment test at half-pixel steps.
    fn sees(&self, a: Point, b: Point) -> bool {
        let len = a.dist(b);
        let steps = (len / 0.5).ceil().max(1.0) as usize;
        (0..=steps).all(|s| self.contains(a + (b - a) * (s as f64 / steps as f64)))
    }
}

/// All-pairs inner distances and inner angles of the sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerDistances {
    pub n: usize,
    /// Row-major `n x n` shortest interior path lengths.
    pub dist: Vec<f64>,
    /// Row-major angle in `[0, 2pi)` between the tangent at `p` and the
    /// first edge of the shortest path from `p` to `q`.
    pub angle: Vec<f64>,
}

impl InnerDistances {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }
}

fn angle_from(tangent: Point, dir: Point) -> f64 {
    let a = tangent.cross(dir).atan2(tangent.dot(dir));
    a.rem_euclid(std::f64::consts::TAU)
}

/// Shortest paths over the visibility graph of the samples.
pub fn inner_distances(shape: &BinaryShape, pts: &ContourSamples) -> Result<InnerDistances> {
    let n = pts.len();
    let interior = Interior::new(shape);
    let p = &pts.points;
    let mut dist = vec![f64::INFINITY; n * n];
    // next[i*n+j]: first vertex after i on the shortest path to j
    let mut next = vec![usize::MAX; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
        next[i * n + i] = i;
        for j in i + 1..n {
            if interior.sees(p[i], p[j]) {
                let d = p[i].dist(p[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
                next[i * n + j] = j;
                next[j * n + i] = i;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let alt = dik + dist[k * n + j];
                if alt < dist[i * n + j] {
                    dist[i * n + j] = alt;
                    next[i * n + j] = next[i * n + k];
                }
            }
        }
    }
    if let Some(bad) = (0..n).find(|&i| dist[i * n..(i + 1) * n].iter().any(|d| !d.is_finite())) {
        return Err(TsrError::DisconnectedInterior(bad));
    }
    // exact symmetry regardless of summation order
    for i in 0..n {
        for j in i + 1..n {
            let d = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut angle = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let hop = next[i * n + j];
                angle[i * n + j] = angle_from(pts.tangents[i], p[hop] - p[i]);
            }
        }
    }
    Ok(InnerDistances { n, dist, angle })
}

/// Per-point log-polar histograms, one L1-normalized row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalDescriptor {
    pub n: usize,
    pub n_dist: usize,
    pub n_angle: usize,
    pub hist: Vec<f64>,
}

impl LocalDescriptor {
    pub fn bins(&self) -> usize {
        self.n_dist * self.n_angle
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let b = self.bins();
        &self.hist[i * b..(i + 1) * b]
    }
}

/// Histogram the (distance, angle) pairs of every point. Distances are
/// normalized by their mean over all ordered pairs.
pub(crate) fn histogram(
    n: usize,
    dist: &[f64],
    angle: &[f64],
    n_dist: usize,
    n_angle: usize,
) -> LocalDescriptor {
    let pairs = (n * n - n).max(1) as f64;
    let mean = dist.iter().sum::<f64>() / pairs;
    let (lo, hi) = (LOG_DIST_RANGE.0.ln(), LOG_DIST_RANGE.1.ln());
    let bins = n_dist * n_angle;
    let mut hist = vec![0.0; n * bins];
    for i in 0..n {
        let row = &mut hist[i * bins..(i + 1) * bins];
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = dist[i * n + j] / mean;
            let db = if r <= 0.0 {
                0
            } else {
                (((r.ln() - lo) / (hi - lo) * n_dist as f64).floor().max(0.0) as usize)
                    .min(n_dist - 1)
            };
            let ab = ((angle[i * n + j] / std::f64::consts::TAU * n_angle as f64).floor() as usize)
                .min(n_angle - 1);
            row[db * n_angle + ab] += 1.0;
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    LocalDescriptor {
        n,
        n_dist,
        n_angle,
        hist,
    }
}

pub fn idsc_from_samples(
    shape: &BinaryShape,
    pts: &ContourSamples,
    params: &LocalParams,
) -> Result<LocalDescriptor> {
    let id = inner_distances(shape, pts)?;
    Ok(histogram(
        id.n,
        &id.dist,
        &id.angle,
        params.n_dist,
        params.n_angle,
    ))
}

/// Boundary samples of a normalized shape: traced, smoothed, resampled.
pub fn shape_samples(shape: &NormalizedShape, params: &LocalParams) -> Result<ContourSamples> {
    let contour = smooth_contour(&extract_contour(&shape.grid)?, params.smoothing_sigma);
    sample_contour(&contour, params.n_samples)
}

pub fn idsc_descriptor(shape: &NormalizedShape, params: &LocalParams) -> Result<LocalDescriptor> {
    idsc_from_samples(&shape.grid, &shape_samples(shape, params)?, params)
}

fn chi2(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let s = x + y;
            if s > 0.0 {
                (x - y) * (x - y) / s
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// Order-preserving alignment of rows `0..n` against columns `shift..`
/// (circularly), skipping a point on either side at `penalty`.
fn dp_align(
    cost: &[f64],
    n: usize,
    m: usize,
    shift: usize,
    penalty: f64,
    prev: &mut Vec<f64>,
    cur: &mut Vec<f64>,
) -> f64 {
    prev.clear();
    prev.extend((0..=m).map(|j| j as f64 * penalty));
    for i in 1..=n {
        cur.clear();
        cur.push(i as f64 * penalty);
        let row = &cost[(i - 1) * m..i * m];
        for j in 1..=m {
            let c = row[(j - 1 + shift) % m];
            let v = (prev[j - 1] + c)
                .min(prev[j] + penalty)
                .min(cur[j - 1] + penalty);
            cur.push(v);
        }
        std::mem::swap(prev, cur);
    }
    prev[m]
}

/// Matching cost of `a` against `b` minimized over `shifts` evenly spaced
/// starting points of `b`.
fn directed_distance(cost: &[f64], n: usize, m: usize, shifts: usize, penalty: f64) -> f64 {
    let (mut prev, mut cur) = (Vec::with_capacity(m + 1), Vec::with_capacity(m + 1));
    let shifts = shifts.clamp(1, m.max(1));
    (0..shifts)
        .map(|s| dp_align(cost, n, m, s * m / shifts, penalty, &mut prev, &mut cur))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetrized dynamic-programming matching distance with chi-square
/// point costs.
pub fn idsc_distance(
    a: &LocalDescriptor,
    b: &LocalDescriptor,
    params: &LocalParams,
) -> Result<f64> {
    if a.bins() != b.bins() {
        return Err(TsrError::DimensionMismatch {
            expected: a.bins(),
            got: b.bins(),
        });
    }
    if a.n != b.n {
        return Err(TsrError::DimensionMismatch {
            expected: a.n,
            got: b.n,
        });
    }
    let n = a.n;
    let mut ab = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            ab[i * n + j] = chi2(a.row(i), b.row(j));
        }
    }
    let mut ba = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            ba[j * n + i] = ab[i * n + j];
        }
    }
    let d1 = directed_distance(&ab, n, n, params.shifts, params.skip_penalty);
    let d2 = directed_distance(&ba, n, n, params.shifts, params.skip_penalty);
    Ok((d1 + d2) / 2.0)
}

/// Symmetric pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize) -> Self {
        DistanceMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Build from a full row-major matrix, which must be square,
    /// symmetric, non-negative and zero on the diagonal.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(TsrError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(TsrError::InvalidConfig(format!(
                    "distance d({i},{i}) is not zero"
                )));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if v.is_nan() || v < 0.0 || v != data[j * n + i] {
                    return Err(TsrError::InvalidConfig(format!(
                        "distance d({i},{j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    /// Fill the upper triangle from `f` and mirror it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Restriction to `idx`, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut data = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        DistanceMatrix { n: k, data }
    }

    /// Append one point given its distances to the existing ones.
    pub fn extended(&self, to_new: &[f64]) -> Self {
        let n = self.n + 1;
        let mut data = vec![0.0; n * n];
        for i in 0..self.n {
            data[i * n..i * n + self.n].copy_from_slice(self.row(i));
            data[i * n + self.n] = to_new[i];
            data[self.n * n + i] = to_new[i];
        }
        DistanceMatrix { n, data }
    }
}

/// All pairwise [`idsc_distance`]s, computed in parallel.
pub fn distance_matrix(descs: &[LocalDescriptor], params: &LocalParams) -> Result<DistanceMatrix> {
    let n = descs.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| idsc_distance(&descs[i], &descs[j], params))
        .collect::<Result<Vec<f64>>>()?;
    let mut m = DistanceMatrix::zeros(n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m.set(i, j, v);
    }
    Ok(m)
}

/// Distances from one descriptor to every gallery descriptor.
pub fn distances_to(
    query: &LocalDescriptor,
    gallery: &[LocalDescriptor],
    params: &LocalParams,
) -> Result<Vec<f64>> {
    gallery
        .par_iter()
        .map(|g| idsc_distance(query, g, params))
        .collect()
}
