//! Shape normalization: hole filling, boundary tracing, contour smoothing,
//! reflection-symmetry axis detection, and pose/scale normalization.

use std::collections::VecDeque;

use crate::error::{Result, TsrError};
use crate::geom::{closed_length, Point};
use crate::raster::{label_components, Connectivity};
use crate::shapeio::BinaryShape;

/// Default side of the normalized square raster.
pub const DEFAULT_RASTER: usize = 256;
/// Fraction of the raster occupied by the larger bounding-box side.
pub const FILL_FRACTION: f64 = 0.9;
/// Default Gaussian smoothing width for contours, in pixels.
pub const DEFAULT_SMOOTHING_SIGMA: f64 = 2.0;

const MIN_CONTOUR_PIXELS: usize = 8;

/// A closed boundary polyline, counter-clockwise as displayed (y axis down).
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<Point>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Perimeter of the closed polyline.
    pub fn length(&self) -> f64 {
        closed_length(&self.points)
    }

    /// Sum of absolute turning angles at every vertex.
    pub fn total_absolute_curvature(&self) -> f64 {
        turning_angles(&self.points).iter().map(|a| a.abs()).sum()
    }

    /// Largest absolute turning angle at any vertex.
    pub fn max_curvature(&self) -> f64 {
        turning_angles(&self.points)
            .iter()
            .fold(0.0f64, |m, a| m.max(a.abs()))
    }
}

fn turning_angles(pts: &[Point]) -> Vec<f64> {
    let n = pts.len();
    (0..n)
        .filter_map(|i| {
            let a = pts[i] - pts[(i + n - 1) % n];
            let b = pts[(i + 1) % n] - pts[i];
            (a.norm() > 0.0 && b.norm() > 0.0).then(|| a.cross(b).atan2(a.dot(b)))
        })
        .collect()
}

/// A shape resampled onto a square raster with canonical pose and scale.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedShape {
    pub grid: BinaryShape,
    pub source_id: String,
    /// Dominant reflection axis of the input, degrees in `[0, 180)`.
    pub symmetry_axis_angle: f64,
    pub symmetry_score: f64,
}

impl NormalizedShape {
    pub fn raster(&self) -> usize {
        self.grid.width
    }
}

/// Fill interior holes and keep only the largest 8-connected component.
pub fn fill_holes(shape: &BinaryShape) -> BinaryShape {
    let (w, h) = (shape.width, shape.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, q: &mut VecDeque<usize>, o: &mut Vec<bool>| {
        let i = y * w + x;
        if !shape.grid[i] && !o[i] {
            o[i] = true;
            q.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut queue, &mut outside);
        seed(x, h - 1, &mut queue, &mut outside);
    }
    for y in 0..h {
        seed(0, y, &mut queue, &mut outside);
        seed(w - 1, y, &mut queue, &mut outside);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !shape.grid[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    let mut filled = shape.clone();
    for (v, o) in filled.grid.iter_mut().zip(&outside) {
        *v = !*o;
    }
    largest_component(&filled)
}

/// Keep the largest 8-connected foreground component (earliest in raster
/// order on ties).
pub fn largest_component(shape: &BinaryShape) -> BinaryShape {
    let (labels, sizes) = label_components(shape, true, Connectivity::Eight);
    if sizes.len() <= 1 {
        return shape.clone();
    }
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    let keep = best as u32 + 1;
    let mut out = shape.clone();
    for (v, &l) in out.grid.iter_mut().zip(&labels) {
        *v = l == keep;
    }
    out
}

// Clockwise on screen, starting west.
const MOORE: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn moore_index(dx: isize, dy: isize) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is a Moore neighbor")
}

/// Trace the outer boundary with Moore-neighbor tracing, stopping when the
/// first step out of the start pixel repeats. The first point is the topmost-then-leftmost foreground pixel.
pub fn extract_contour(shape: &BinaryShape) -> Result<Contour> {
    let start = shape
        .foreground()
        .next()
        .ok_or_else(|| TsrError::EmptyShape(shape.id.clone()))?;
    let start = (start.0 as isize, start.1 as isize);
    // the west neighbor of the first raster-order pixel is background
    let start_back = 0usize;
    let mut trace = vec![start];
    let (mut cur, mut back) = (start, start_back);
    let limit = 4 * shape.width * shape.height + 8;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let q = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            if shape.get(q.0, q.1) {
                let prev = (back + k - 1) % 8;
                let b = (cur.0 + MOORE[prev].0, cur.1 + MOORE[prev].1);
                next = Some((q, moore_index(b.0 - q.0, b.1 - q.1)));
                break;
            }
        }
        let Some((q, qb)) = next else {
            break; // isolated pixel
        };
        // closed once the first move out of the start pixel repeats
        if cur == start && trace.len() > 1 && q == trace[1] {
            break;
        }
        cur = q;
        back = qb;
        trace.push(cur);
        if trace.len() > limit {
            return Err(TsrError::DegenerateShape(format!(
                "{}: boundary trace did not close",
                shape.id
            )));
        }
    }
    if trace.len() > 1 && trace.last() == Some(&start) {
        trace.pop();
    }
    if trace.len() < MIN_CONTOUR_PIXELS {
        return Err(TsrError::DegenerateShape(format!(
            "{}: only {} boundary pixels",
            shape.id,
            trace.len()
        )));
    }
    // Moore tracing runs clockwise on screen; reverse, keeping the start.
    trace[1..].reverse();
    Ok(Contour {
        points: trace
            .into_iter()
            .map(|(x, y)| Point::new(x as f64, y as f64))
            .collect(),
    })
}

/// Circular Gaussian smoothing of the coordinate sequences.
pub fn smooth_contour(contour: &Contour, sigma: f64) -> Contour {
    let n = contour.points.len();
    if sigma <= 0.0 || n < 3 {
        return contour.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let points = (0..n as isize)
        .map(|i| {
            let mut acc = Point::default();
            for (j, &w) in (-radius..=radius).zip(&kernel) {
                let idx = (i + j).rem_euclid(n as isize) as usize;
                acc = acc + contour.points[idx] * w;
            }
            acc
        })
        .collect();
    Contour { points }
}

/// The dominant reflection-symmetry axis through the centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetryAxis {
    /// Degrees in `[0, 180)`, measured counter-clockwise from the +x axis
    /// with y pointing up.
    pub angle: f64,
    /// Jaccard overlap of the shape with its mirror image.
    pub score: f64,
}

/// Mirror-overlap score for every whole-degree axis angle in `[0, 180)`.
pub fn symmetry_profile(shape: &BinaryShape) -> Vec<f64> {
    let Some((cx, cy)) = shape.centroid() else {
        return vec![0.0; 180];
    };
    let pts: Vec<(f64, f64)> = shape
        .foreground()
        .map(|(x, y)| (x as f64 - cx, y as f64 - cy))
        .collect();
    let area = pts.len() as f64;
    (0..180)
        .map(|deg| {
            let t = (deg as f64).to_radians();
            // axis direction in pixel coordinates (y down)
            let (ux, uy) = (t.cos(), -t.sin());
            let mut hits = 0usize;
            for &(dx, dy) in &pts {
                let proj = dx * ux + dy * uy;
                let mx = 2.0 * proj * ux - dx + cx;
                let my = 2.0 * proj * uy - dy + cy;
                if shape.get(mx.round() as isize, my.round() as isize) {
                    hits += 1;
                }
            }
            let inter = hits as f64;
            inter / (2.0 * area - inter)
        })
        .collect()
}

fn argmax_axis(profile: &[f64]) -> SymmetryAxis {
    let mut best = 0;
    for (i, &s) in profile.iter().enumerate() {
        if s > profile[best] + 1e-12 {
            best = i;
        }
    }
    SymmetryAxis {
        angle: best as f64,
        score: profile[best],
    }
}

/// Sweep axes at 1 degree resolution; ties go to the smallest angle.
pub fn dominant_symmetry_axis(shape: &BinaryShape) -> SymmetryAxis {
    argmax_axis(&symmetry_profile(shape))
}

/// Score gap between the best axis and the best axis at least 15 degrees
/// away from it. Small gaps mean the axis choice is unstable.
pub fn axis_ambiguity_gap(profile: &[f64]) -> f64 {
    let best = argmax_axis(profile);
    let b = best.angle as i64;
    let runner_up = profile
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let d = (*i as i64 - b).rem_euclid(180);
            d.min(180 - d) >= 15
        })
        .map(|(_, &s)| s)
        .fold(0.0f64, f64::max);
    best.score - runner_up
}

/// Rotate so the dominant axis is vertical, center the centroid, scale the
/// larger side to `0.9 * raster`, resample (nearest neighbor) and re-fill.
///
/// The axis has two orientations; the one putting more foreground mass in
/// the lower half is chosen (no flip on ties). When the centroid sits far
/// from the middle of the bounding box the scale is reduced so nothing is
/// clipped.
pub fn normalize(shape: &BinaryShape, raster: usize) -> Result<NormalizedShape> {
    let filled = fill_holes(shape);
    let (cx, cy) = filled
        .centroid()
        .ok_or_else(|| TsrError::EmptyShape(shape.id.clone()))?;
    let axis = dominant_symmetry_axis(&filled);

    // math-frame (y up) rotation taking the axis to 90 degrees
    let mut phi = (90.0 - axis.angle).to_radians();
    let rotate = |dx: f64, dy: f64, phi: f64| -> (f64, f64) {
        let (s, c) = phi.sin_cos();
        let (mx, my) = (dx, -dy);
        let (rx, ry) = (c * mx - s * my, s * mx + c * my);
        (rx, -ry)
    };
    let (mut upper, mut lower) = (0usize, 0usize);
    for (x, y) in filled.foreground() {
        let (_, ry) = rotate(x as f64 - cx, y as f64 - cy, phi);
        if ry < -1e-9 {
            upper += 1;
        } else if ry > 1e-9 {
            lower += 1;
        }
    }
    if upper > lower {
        phi += std::f64::consts::PI;
    }

    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in filled.foreground() {
        let (rx, ry) = rotate(x as f64 - cx, y as f64 - cy, phi);
        x0 = x0.min(rx - 0.5);
        x1 = x1.max(rx + 0.5);
        y0 = y0.min(ry - 0.5);
        y1 = y1.max(ry + 0.5);
    }
    let side = (x1 - x0).max(y1 - y0);
    if side <= 1.0 {
        return Err(TsrError::DegenerateShape(format!(
            "{}: shape is a single pixel",
            shape.id
        )));
    }
    let r = raster as f64;
    let reach = x0.abs().max(x1).max(y0.abs()).max(y1);
    let scale = (FILL_FRACTION * r / side).min((0.5 * r - 1.0) / reach);

    let center = (r - 1.0) / 2.0;
    let out = BinaryShape::from_fn(shape.id.clone(), raster, raster, |u, v| {
        let rx = (u as f64 - center) / scale;
        let ry = (v as f64 - center) / scale;
        let (sx, sy) = rotate(rx, ry, -phi);
        filled.get((sx + cx).round() as isize, (sy + cy).round() as isize)
    });
    let grid = fill_holes(&out);
    if grid.area() == 0 {
        return Err(TsrError::DegenerateShape(format!(
            "{}: vanished after resampling",
            shape.id
        )));
    }
    Ok(NormalizedShape {
        grid,
        source_id: shape.id.clone(),
        symmetry_axis_angle: axis.angle,
        symmetry_score: axis.score,
    })
}
