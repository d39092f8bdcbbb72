//! Aspect ratio, circularity, symmetry, and solidity.

use std::f64::consts::PI;

use crate::error::Result;
use crate::geom::{convex_hull, signed_area, Point};
use crate::preprocess::{extract_contour, smooth_contour, NormalizedShape};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricFeature {
    pub aspect_ratio: f64,
    pub circularity: f64,
    pub symmetry: f64,
    pub solidity: f64,
}

impl GeometricFeature {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.aspect_ratio,
            self.circularity,
            self.symmetry,
            self.solidity,
        ]
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// Number of integer points inside or on a lattice polygon (Pick's theorem).
fn lattice_points(hull: &[Point]) -> f64 {
    match hull.len() {
        0 => return 0.0,
        1 => return 1.0,
        _ => {}
    }
    let n = hull.len();
    let boundary: i64 = (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            gcd((b.x - a.x) as i64, (b.y - a.y) as i64)
        })
        .sum();
    let area = signed_area(hull).abs();
    area + boundary as f64 / 2.0 + 1.0
}

/// Solidity is the pixel count over the number of pixel centers covered by
/// the convex hull of the foreground, so digitally convex shapes score 1.
pub fn geometric_features(
    shape: &NormalizedShape,
    smoothing_sigma: f64,
) -> Result<GeometricFeature> {
    let g = &shape.grid;
    let area = g.area() as f64;
    let (x0, y0, x1, y1) = g
        .bounding_box()
        .ok_or_else(|| crate::TsrError::EmptyShape(shape.source_id.clone()))?;
    let (w, h) = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
    let contour = extract_contour(g)?;
    let perimeter = smooth_contour(&contour, smoothing_sigma).length();
    let boundary: Vec<Point> = g
        .foreground()
        .filter(|&(x, y)| {
            let (x, y) = (x as isize, y as isize);
            !(g.get(x - 1, y) && g.get(x + 1, y) && g.get(x, y - 1) && g.get(x, y + 1))
        })
        .map(|(x, y)| Point::new(x as f64, y as f64))
        .collect();
    let hull = convex_hull(&boundary);
    Ok(GeometricFeature {
        aspect_ratio: w.min(h) / w.max(h),
        circularity: 4.0 * PI * area / (perimeter * perimeter),
        symmetry: shape.symmetry_score,
        solidity: (area / lattice_points(&hull)).min(1.0),
    })
}
