//! Zhang-Suen thinning, spur pruning, and salient-point counting.

use std::collections::HashMap;

use crate::error::{Result, TsrError};
use crate::geom::Point;
use crate::preprocess::NormalizedShape;
use crate::raster::distance_transform;

/// Neighbor offsets in Zhang-Suen order P2..P9 (N, NE, E, SE, S, SW, W, NW).
const ZS: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Gaussian width, in pixels, applied to skeleton paths before measuring
/// turns, so single-pixel jogs do not register.
const PATH_SIGMA: f64 = 2.0;

/// Junctions joined by a path at most this long (pixels), or lying within
/// each other's inscribed disks, are one junction.
const JUNCTION_MERGE_LENGTH: f64 = 3.0;

/// One-pixel-wide skeleton on the raster of its source shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    /// Distance to the shape boundary per pixel; all zero for a bare
    /// pixel skeleton.
    pub radius: Vec<f64>,
}

impl Skeleton {
    /// A skeleton with no shape attached.
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Self {
        let radius = vec![0.0; mask.len()];
        Skeleton {
            width,
            height,
            mask,
            radius,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&v| v)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i % w, i / w))
    }

    #[inline]
    fn get(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.mask[y as usize * self.width + x as usize]
    }

    fn ring(&self, i: usize) -> [bool; 8] {
        let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
        ZS.map(|(dx, dy)| self.get(x + dx, y + dy))
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
        ZS.iter().filter_map(move |&(dx, dy)| {
            self.get(x + dx, y + dy)
                .then(|| (y + dy) as usize * self.width + (x + dx) as usize)
        })
    }

    pub fn degree_at(&self, x: usize, y: usize) -> usize {
        self.neighbors(y * self.width + x).count()
    }

    /// Maximum Chebyshev extent of the pixel set.
    pub fn diameter(&self) -> usize {
        let mut it = self.pixels();
        let Some(first) = it.next() else { return 0 };
        let (mut x0, mut y0, mut x1, mut y1) = (first.0, first.1, first.0, first.1);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        (x1 - x0 + 1).max(y1 - y0 + 1)
    }
}

fn transitions(r: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !r[k] && r[(k + 1) % 8]).count()
}

/// Yokoi 8-connectivity number; a pixel is simple iff this equals one.
fn yokoi8(r: &[bool; 8]) -> i32 {
    // ring starting east, counter-clockwise: E NE N NW W SW S SE
    let x = [r[2], r[1], r[0], r[7], r[6], r[5], r[4], r[3]];
    let nb = |k: usize| !x[k % 8] as i32;
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| nb(k) - nb(k) * nb(k + 1) * nb(k + 2))
        .sum()
}

/// Remove non-end pixels whose neighbors stay 8-connected without them
/// (staircase corners, tiny triangles).
fn remove_redundant(skel: &mut Skeleton) -> bool {
    let mut changed_any = false;
    loop {
        let mut changed = false;
        for i in 0..skel.mask.len() {
            if !skel.mask[i] {
                continue;
            }
            let r = skel.ring(i);
            let count = r.iter().filter(|&&v| v).count();
            if count >= 2 && yokoi8(&r) == 1 {
                skel.mask[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        changed_any = true;
    }
    changed_any
}

/// Zhang-Suen thinning followed by staircase cleanup.
pub fn skeletonize(shape: &NormalizedShape) -> Result<Skeleton> {
    let g = &shape.grid;
    if g.area() == 0 {
        return Err(TsrError::DegenerateShape(format!(
            "{}: empty raster",
            shape.source_id
        )));
    }
    let mut skel = Skeleton {
        width: g.width,
        height: g.height,
        mask: g.grid.clone(),
        radius: distance_transform(g),
    };
    let mut active: Vec<usize> = (0..skel.mask.len()).filter(|&i| skel.mask[i]).collect();
    loop {
        let mut removed = false;
        for step in 0..2 {
            let doomed: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| {
                    let r = skel.ring(i);
                    let b = r.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) || transitions(&r) != 1 {
                        return false;
                    }
                    let (p2, p4, p6, p8) = (r[0], r[2], r[4], r[6]);
                    if step == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    }
                })
                .collect();
            // a 2x2 core would otherwise vanish in one pass
            let doomed = if !doomed.is_empty()
                && doomed.len() == active.iter().filter(|&&i| skel.mask[i]).count()
            {
                &doomed[1..]
            } else {
                &doomed[..]
            };
            for &i in doomed {
                skel.mask[i] = false;
            }
            removed |= !doomed.is_empty();
        }
        if !removed {
            break;
        }
        active.retain(|&i| skel.mask[i]);
    }
    remove_redundant(&mut skel);
    Ok(skel)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NodeKind {
    End,
    Junction,
    Isolated,
}

#[derive(Debug)]
struct Node {
    kind: NodeKind,
    pixels: Vec<usize>,
}

#[derive(Debug)]
struct Edge {
    a: Option<usize>,
    b: Option<usize>,
    /// Pixels strictly between the end nodes; for node-free loops, the loop.
    path: Vec<usize>,
    /// Includes the steps into the end nodes.
    length: f64,
}

#[derive(Debug)]
struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

fn step_len(w: usize, a: usize, b: usize) -> f64 {
    let (ax, ay) = ((a % w) as f64, (a / w) as f64);
    let (bx, by) = ((b % w) as f64, (b / w) as f64);
    (ax - bx).hypot(ay - by)
}

fn build_graph(skel: &Skeleton) -> Graph {
    let w = skel.width;
    let deg: HashMap<usize, usize> = (0..skel.mask.len())
        .filter(|&i| skel.mask[i])
        .map(|i| (i, skel.neighbors(i).count()))
        .collect();
    let mut node_of: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut keys: Vec<usize> = deg.keys().copied().collect();
    keys.sort_unstable();
    for &i in &keys {
        if node_of.contains_key(&i) {
            continue;
        }
        let kind = match deg[&i] {
            0 => NodeKind::Isolated,
            1 => NodeKind::End,
            2 => continue,
            _ => NodeKind::Junction,
        };
        let id = nodes.len();
        let mut pixels = vec![i];
        node_of.insert(i, id);
        if kind == NodeKind::Junction {
            let mut k = 0;
            while k < pixels.len() {
                let p = pixels[k];
                for q in skel.neighbors(p) {
                    if deg[&q] >= 3 && !node_of.contains_key(&q) {
                        node_of.insert(q, id);
                        pixels.push(q);
                    }
                }
                k += 1;
            }
        }
        nodes.push(Node { kind, pixels });
    }

    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut edges = Vec::new();
    let mut seen_direct: std::collections::HashSet<(usize, usize)> = Default::default();
    for (nid, node) in nodes.iter().enumerate() {
        for &np in &node.pixels {
            for q in skel.neighbors(np) {
                if let Some(&other) = node_of.get(&q) {
                    if other != nid {
                        let key = (nid.min(other), nid.max(other));
                        if seen_direct.insert(key) {
                            edges.push(Edge {
                                a: Some(nid),
                                b: Some(other),
                                path: Vec::new(),
                                length: step_len(w, np, q),
                            });
                        }
                    }
                    continue;
                }
                if visited.contains_key(&q) {
                    continue;
                }
                let mut path = vec![q];
                visited.insert(q, true);
                let mut length = step_len(w, np, q);
                let (mut prev, mut cur) = (np, q);
                let end = loop {
                    let nbrs: Vec<usize> = skel.neighbors(cur).filter(|&r| r != prev).collect();
                    if let Some(&r) = nbrs
                        .iter()
                        .find(|&&r| node_of.get(&r).is_some_and(|&o| o != nid || path.len() > 1))
                    {
                        length += step_len(w, cur, r);
                        break Some(node_of[&r]);
                    }
                    match nbrs
                        .iter()
                        .find(|&&r| !visited.contains_key(&r) && !node_of.contains_key(&r))
                    {
                        Some(&r) => {
                            visited.insert(r, true);
                            length += step_len(w, cur, r);
                            path.push(r);
                            prev = cur;
                            cur = r;
                        }
                        None => break None,
                    }
                };
                edges.push(Edge {
                    a: Some(nid),
                    b: end,
                    path,
                    length,
                });
            }
        }
    }
    // node-free loops
    for &i in &keys {
        if deg[&i] != 2 || visited.contains_key(&i) {
            continue;
        }
        let mut path = vec![i];
        visited.insert(i, true);
        let mut cur = i;
        let mut length = 0.0;
        while let Some(r) = skel.neighbors(cur).find(|r| !visited.contains_key(r)) {
            visited.insert(r, true);
            length += step_len(w, cur, r);
            path.push(r);
            cur = r;
        }
        length += step_len(w, cur, i);
        edges.push(Edge {
            a: None,
            b: None,
            path,
            length,
        });
    }
    Graph { nodes, edges }
}

fn pixel_dist(w: usize, a: usize, b: usize) -> f64 {
    step_len(w, a, b)
}

/// How far the inscribed disks along `path` extend beyond the largest
/// inscribed disk of the junction `junction`. On a bare skeleton this is the
/// Euclidean reach of the branch from the junction.
fn reach_beyond(skel: &Skeleton, junction: &[usize], path: impl Iterator<Item = usize>) -> f64 {
    let c = *junction
        .iter()
        .max_by(|&&a, &&b| skel.radius[a].total_cmp(&skel.radius[b]).then(b.cmp(&a)))
        .expect("junction has pixels");
    path.map(|p| pixel_dist(skel.width, p, c) + skel.radius[p])
        .fold(0.0, f64::max)
        - skel.radius[c]
}

/// Repeatedly delete the terminal branch (end point to junction) of least
/// reach while its reach beyond the junction's inscribed disk is below
/// `min_branch_frac * raster`. A path with no junction is never touched.
pub fn prune_skeleton(skel: &Skeleton, min_branch_frac: f64) -> Skeleton {
    let threshold = min_branch_frac * skel.width.max(skel.height) as f64;
    let mut out = skel.clone();
    loop {
        let g = build_graph(&out);
        if !g.nodes.iter().any(|n| n.kind == NodeKind::Junction) {
            break;
        }
        let terminal = g
            .edges
            .iter()
            .filter_map(|e| {
                let (a, b) = (e.a?, e.b?);
                let (ka, kb) = (g.nodes[a].kind, g.nodes[b].kind);
                let (end, junction) = match (ka, kb) {
                    (NodeKind::End, NodeKind::Junction) => (a, b),
                    (NodeKind::Junction, NodeKind::End) => (b, a),
                    _ => return None,
                };
                let pixels = e.path.iter().chain(&g.nodes[end].pixels).copied();
                let reach = reach_beyond(&out, &g.nodes[junction].pixels, pixels);
                (reach < threshold).then_some((e, end, reach))
            })
            .min_by(|(_, n1, r1), (_, n2, r2)| {
                r1.total_cmp(r2)
                    .then(g.nodes[*n1].pixels[0].cmp(&g.nodes[*n2].pixels[0]))
            });
        let Some((edge, end, _)) = terminal else {
            break;
        };
        for &p in edge.path.iter().chain(&g.nodes[end].pixels) {
            out.mask[p] = false;
        }
        remove_redundant(&mut out);
    }
    out
}

/// Counts of the four salient point types.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SkeletonFeature {
    pub turning_pts: u32,
    pub end_pts: u32,
    pub t_junction_pts: u32,
    pub cross_junction_pts: u32,
}

impl SkeletonFeature {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.turning_pts as f64,
            self.end_pts as f64,
            self.t_junction_pts as f64,
            self.cross_junction_pts as f64,
        ]
    }
}

/// Gaussian smoothing of a pixel path; open paths repeat their end points.
fn smooth_path(w: usize, seq: &[usize], sigma: f64, circular: bool) -> Vec<Point> {
    let n = seq.len() as isize;
    let pts: Vec<Point> = seq
        .iter()
        .map(|&p| Point::new((p % w) as f64, (p / w) as f64))
        .collect();
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    (0..n)
        .map(|i| {
            let mut acc = Point::default();
            for (j, &k) in (-radius..=radius).zip(&kernel) {
                let idx = if circular {
                    (i + j).rem_euclid(n)
                } else {
                    (i + j).clamp(0, n - 1)
                };
                acc = acc + pts[idx as usize] * (k / total);
            }
            acc
        })
        .collect()
}

/// Angle, in degrees, by which the path bends at `i` using `arm`-pixel
/// direction vectors on either side. Callers widen the arm to the local
/// stroke radius, so a bend in a thick limb is measured across its full
/// extent.
fn bend_at(pts: &[Point], i: usize, arm: usize, circular: bool) -> Option<f64> {
    let n = pts.len();
    let (before, after) = if circular {
        if n < 2 * arm + 1 {
            return None;
        }
        (pts[(i + n - arm) % n], pts[(i + arm) % n])
    } else {
        if i < arm || i + arm >= n {
            return None;
        }
        (pts[i - arm], pts[i + arm])
    };
    let (u, v) = (pts[i] - before, after - pts[i]);
    Some(u.cross(v).atan2(u.dot(v)).abs().to_degrees())
}

/// Number of pixels at the start of `path` whose inscribed disks all reach
/// less than `slack` beyond the disk of a single later pixel. Such an end
/// stub is below the pruning scale and carries no direction information.
fn stub_len(skel: &Skeleton, path: impl Iterator<Item = usize>, slack: f64) -> usize {
    let path: Vec<usize> = path.collect();
    let w = skel.width;
    (1..path.len())
        .rev()
        .find(|&t| {
            let (c, rc) = (path[t], skel.radius[path[t]]);
            path[..t]
                .iter()
                .all(|&p| pixel_dist(w, p, c) + skel.radius[p] < rc + slack)
        })
        .unwrap_or(0)
}

fn count_runs(flags: &[bool], circular: bool) -> u32 {
    let n = flags.len();
    let mut runs = (0..n)
        .filter(|&i| flags[i] && (i == 0 || !flags[i - 1]))
        .count() as u32;
    if circular && n > 1 && flags[0] && flags[n - 1] && runs > 0 {
        runs -= 1;
        if flags.iter().all(|&f| f) {
            runs = 1;
        }
    }
    runs
}

/// Classify end points, junctions, and sharp turns on a pruned skeleton.
///
/// Junction pixel clusters, and junctions joined by a short path (see
/// [`JUNCTION_MERGE_LENGTH`]), count as one junction; its type follows its
/// branch count.
/// Consecutive over-threshold pixels along a branch form one turning point.
pub fn salient_points(
    skel: &Skeleton,
    turn_angle_deg: f64,
    arm: usize,
    min_branch_frac: f64,
) -> SkeletonFeature {
    let g = build_graph(skel);
    let w = skel.width;
    let stub_reach = min_branch_frac * skel.width.max(skel.height) as f64;

    // branch count per junction, after merging junctions linked by tiny paths
    let mut parent: Vec<usize> = (0..g.nodes.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    let mut internal = vec![0usize; g.nodes.len()];
    for e in &g.edges {
        if let (Some(a), Some(b)) = (e.a, e.b) {
            let both_j =
                g.nodes[a].kind == NodeKind::Junction && g.nodes[b].kind == NodeKind::Junction;
            let node_radius = |n: usize| {
                g.nodes[n]
                    .pixels
                    .iter()
                    .map(|&p| skel.radius[p])
                    .fold(0.0, f64::max)
            };
            let reach = JUNCTION_MERGE_LENGTH.max(node_radius(a).min(node_radius(b)));
            if both_j && a != b && e.length <= reach {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                    internal[rb] += internal[ra];
                }
                let r = find(&mut parent, a);
                internal[r] += 1;
            }
        }
    }
    let mut branches = vec![0usize; g.nodes.len()];
    for e in &g.edges {
        for n in [e.a, e.b].into_iter().flatten() {
            let r = find(&mut parent, n);
            branches[r] += 1;
        }
    }
    let mut feat = SkeletonFeature::default();
    for (i, node) in g.nodes.iter().enumerate() {
        match node.kind {
            NodeKind::End => feat.end_pts += 1,
            NodeKind::Junction if find(&mut parent, i) == i => {
                let deg = branches[i].saturating_sub(2 * internal[i]);
                match deg {
                    0..=2 => {}
                    3 => feat.t_junction_pts += 1,
                    _ => feat.cross_junction_pts += 1,
                }
            }
            _ => {}
        }
    }

    for e in &g.edges {
        let circular = e.a.is_none();
        let mut seq = Vec::with_capacity(e.path.len() + 2);
        let closest = |node: usize, to: usize| -> usize {
            *g.nodes[node]
                .pixels
                .iter()
                .min_by(|&&p, &&q| step_len(w, p, to).total_cmp(&step_len(w, q, to)))
                .expect("node has pixels")
        };
        if let (Some(a), Some(&first)) = (e.a, e.path.first()) {
            seq.push(closest(a, first));
        }
        let interior = seq.len()..seq.len() + e.path.len();
        seq.extend(&e.path);
        if let (Some(b), Some(&last)) = (e.b, e.path.last()) {
            seq.push(closest(b, last));
        }
        let is_end = |n: Option<usize>| n.is_some_and(|n| g.nodes[n].kind == NodeKind::End);
        // arms may not reach into end stubs
        let lo = if is_end(e.a) {
            stub_len(skel, seq.iter().copied(), stub_reach)
        } else {
            0
        };
        let hi = if is_end(e.b) {
            seq.len() - stub_len(skel, seq.iter().rev().copied(), stub_reach)
        } else {
            seq.len()
        };
        let smoothed = smooth_path(w, &seq, PATH_SIGMA, circular);
        let flags: Vec<bool> = (0..seq.len())
            .map(|i| {
                let reach = arm.max(skel.radius[seq[i]].round() as usize);
                interior.contains(&i)
                    && (circular || (i >= lo + reach && i + reach < hi))
                    && bend_at(&smoothed, i, reach, circular).is_some_and(|a| a > turn_angle_deg)
            })
            .collect();
        feat.turning_pts += count_runs(&flags, circular);
    }
    feat
}
