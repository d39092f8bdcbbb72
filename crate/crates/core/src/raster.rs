//! Connected-component utilities on binary grids.

use std::collections::VecDeque;

use crate::shapeio::BinaryShape;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

const N4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

pub(crate) fn offsets(conn: Connectivity) -> &'static [(isize, isize)] {
    match conn {
        Connectivity::Four => &N4,
        Connectivity::Eight => &N8,
    }
}

/// Label the pixels whose value equals `value`. Returns per-pixel labels
/// (`0` = not part of any component, components numbered from 1 in raster
/// order of their first pixel) and the component sizes indexed by label - 1.
pub fn label_components(
    shape: &BinaryShape,
    value: bool,
    conn: Connectivity,
) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (shape.width, shape.height);
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if shape.grid[start] != value || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in offsets(conn) {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if shape.grid[j] == value && labels[j] == 0 {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Number of 8-connected foreground components.
pub fn count_components(shape: &BinaryShape) -> usize {
    label_components(shape, true, Connectivity::Eight).1.len()
}

/// Number of background regions (4-connected) that do not touch the frame.
pub fn count_holes(shape: &BinaryShape) -> usize {
    let (labels, sizes) = label_components(shape, false, Connectivity::Four);
    let (w, h) = (shape.width, shape.height);
    let mut touches = vec![false; sizes.len()];
    for x in 0..w {
        for y in [0, h - 1] {
            let l = labels[y * w + x];
            if l > 0 {
                touches[l as usize - 1] = true;
            }
        }
    }
    for y in 0..h {
        for x in [0, w - 1] {
            let l = labels[y * w + x];
            if l > 0 {
                touches[l as usize - 1] = true;
            }
        }
    }
    touches.iter().filter(|&&t| !t).count()
}

/// Stand-in for an infinite squared distance.
const FAR: f64 = 1e18;

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    v.push(0);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    let sq = |q: usize| f[q] + (q * q) as f64;
    for q in 1..f.len() {
        loop {
            let p = v[v.len() - 1];
            let s = (sq(q) - sq(p)) / (2.0 * (q - p) as f64);
            if s <= z[v.len() - 1] {
                v.pop();
                z.pop();
                continue;
            }
            v.push(q);
            z.pop();
            z.push(s);
            z.push(f64::INFINITY);
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Euclidean distance from each foreground pixel to the nearest background
/// pixel, with everything outside the grid counted as background. Zero on
/// background.
pub fn distance_transform(shape: &BinaryShape) -> Vec<f64> {
    // pad by one so the frame acts as background
    let (w, h) = (shape.width + 2, shape.height + 2);
    let mut grid = vec![0.0f64; w * h];
    for (x, y) in shape.foreground() {
        grid[(y + 1) * w + x + 1] = FAR;
    }
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut col = vec![0.0; h];
    let mut out = vec![0.0; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        edt_1d(&col, &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = grid[y * w..(y + 1) * w].to_vec();
        edt_1d(&row, &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut dist = vec![0.0; shape.width * shape.height];
    for y in 0..shape.height {
        for x in 0..shape.width {
            dist[y * shape.width + x] = grid[(y + 1) * w + x + 1].sqrt();
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_are_one_component_only_under_eight() {
        let s = BinaryShape::from_fn("d", 3, 3, |x, y| x == y);
        assert_eq!(label_components(&s, true, Connectivity::Eight).1, vec![3]);
        assert_eq!(label_components(&s, true, Connectivity::Four).1.len(), 3);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let s = BinaryShape::from_fn("b", 23, 17, |x, y| {
            (x * 3 + y * 5) % 7 != 0 && x > 1 && y > 2 && x + y < 33
        });
        let d = distance_transform(&s);
        for y in 0..s.height as isize {
            for x in 0..s.width as isize {
                let mut best = f64::INFINITY;
                for by in -1..=s.height as isize {
                    for bx in -1..=s.width as isize {
                        if !s.get(bx, by) {
                            best =
                                best.min(((bx - x).pow(2) as f64 + (by - y).pow(2) as f64).sqrt());
                        }
                    }
                }
                let want = if s.get(x, y) { best } else { 0.0 };
                assert!(
                    (d[y as usize * s.width + x as usize] - want).abs() < 1e-9,
                    "({x},{y})"
                );
            }
        }
    }

    #[test]
    fn ring_has_one_hole() {
        let s = BinaryShape::from_fn("r", 7, 7, |x, y| {
            (1..6).contains(&x) && (1..6).contains(&y) && !(x == 3 && y == 3)
        });
        assert_eq!(count_holes(&s), 1);
        assert_eq!(count_components(&s), 1);
    }
}
