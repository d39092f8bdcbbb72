//! Procedural silhouettes built from analytic primitives.
//!
//! Used as test fixtures and for smoke-testing the pipeline without a
//! benchmark dataset on disk. Figures are defined in a y-down plane; angles
//! are counter-clockwise as displayed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geom::Point;
use crate::globalfeat::{
    FeatureScaling, GeometricFeature, GlobalFeature, RawGlobalFeature, SkeletonFeature,
    WaveletFeature,
};
use crate::localfeat::DistanceMatrix;
use crate::pipeline::{train_stage_one, BuildConfig, QueryFeatures, RetrievalIndex};
use crate::shapeio::BinaryShape;

#[derive(Clone, Debug)]
pub enum Primitive {
    Disk {
        c: Point,
        r: f64,
    },
    /// Semi-axes `a` (along `angle`) and `b`.
    Ellipse {
        c: Point,
        a: f64,
        b: f64,
        angle: f64,
    },
    /// Simple polygon, any orientation.
    Polygon(Vec<Point>),
    /// Segment `a`-`b` thickened by radius `r`.
    Capsule {
        a: Point,
        b: Point,
        r: f64,
    },
    /// Polygon grown by radius `r`, which rounds its convex corners.
    Rounded {
        poly: Vec<Point>,
        r: f64,
    },
}

fn segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * t)).norm()
}

fn polygon_contains(poly: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn dir(angle_deg: f64) -> Point {
    let t = angle_deg.to_radians();
    Point::new(t.cos(), -t.sin())
}

impl Primitive {
    fn contains(&self, p: Point) -> bool {
        match self {
            Primitive::Disk { c, r } => (p - *c).norm() <= *r,
            Primitive::Ellipse { c, a, b, angle } => {
                let u = dir(*angle);
                let v = Point::new(-u.y, u.x);
                let d = p - *c;
                let (s, t) = (d.dot(u) / a, d.dot(v) / b);
                s * s + t * t <= 1.0
            }
            Primitive::Polygon(poly) => polygon_contains(poly, p),
            Primitive::Capsule { a, b, r } => segment_dist(p, *a, *b) <= *r,
            Primitive::Rounded { poly, r } => {
                let n = poly.len();
                polygon_contains(poly, p)
                    || (0..n).any(|i| segment_dist(p, poly[i], poly[(i + 1) % n]) <= *r)
            }
        }
    }

    fn bounds(&self) -> (Point, Point) {
        match self {
            Primitive::Disk { c, r } => (*c - Point::new(*r, *r), *c + Point::new(*r, *r)),
            Primitive::Ellipse { c, a, .. } => (*c - Point::new(*a, *a), *c + Point::new(*a, *a)),
            Primitive::Polygon(poly) => poly.iter().fold(
                (
                    Point::new(f64::MAX, f64::MAX),
                    Point::new(f64::MIN, f64::MIN),
                ),
                |(lo, hi), p| {
                    (
                        Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                        Point::new(hi.x.max(p.x), hi.y.max(p.y)),
                    )
                },
            ),
            Primitive::Capsule { a, b, r } => (
                Point::new(a.x.min(b.x) - r, a.y.min(b.y) - r),
                Point::new(a.x.max(b.x) + r, a.y.max(b.y) + r),
            ),
            Primitive::Rounded { poly, r } => {
                let (lo, hi) = Primitive::Polygon(poly.clone()).bounds();
                (lo - Point::new(*r, *r), hi + Point::new(*r, *r))
            }
        }
    }
}

/// Union of `add` primitives minus the union of `cut` primitives.
#[derive(Clone, Debug, Default)]
pub struct Figure {
    pub add: Vec<Primitive>,
    pub cut: Vec<Primitive>,
}

/// Scale, then rotate (degrees, counter-clockwise on screen), then translate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl Default for Similarity {
    fn default() -> Self {
        Similarity {
            scale: 1.0,
            rotation: 0.0,
            translation: (0.0, 0.0),
        }
    }
}

impl Similarity {
    pub fn new(scale: f64, rotation: f64, translation: (f64, f64)) -> Self {
        Similarity {
            scale,
            rotation,
            translation,
        }
    }

    fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.to_radians().sin_cos();
        Point::new(
            self.scale * (c * p.x + s * p.y) + self.translation.0,
            self.scale * (-s * p.x + c * p.y) + self.translation.1,
        )
    }

    fn invert(&self, q: Point) -> Point {
        let (s, c) = self.rotation.to_radians().sin_cos();
        let (x, y) = (
            (q.x - self.translation.0) / self.scale,
            (q.y - self.translation.1) / self.scale,
        );
        Point::new(c * x - s * y, s * x + c * y)
    }
}

impl Figure {
    pub fn new(add: Vec<Primitive>) -> Self {
        Figure {
            add,
            cut: Vec::new(),
        }
    }

    pub fn minus(mut self, cut: Primitive) -> Self {
        self.cut.push(cut);
        self
    }

    pub fn contains(&self, p: Point) -> bool {
        self.add.iter().any(|a| a.contains(p)) && !self.cut.iter().any(|c| c.contains(p))
    }

    /// Rasterize on a canvas that fits the transformed figure with a margin.
    /// The translation moves the figure inside a canvas whose size does
    /// not depend on it.
    pub fn rasterize(&self, id: &str, t: Similarity) -> BinaryShape {
        let (lo, hi) = self.add.iter().map(Primitive::bounds).fold(
            (
                Point::new(f64::MAX, f64::MAX),
                Point::new(f64::MIN, f64::MIN),
            ),
            |(lo, hi), (a, b)| {
                (
                    Point::new(lo.x.min(a.x), lo.y.min(a.y)),
                    Point::new(hi.x.max(b.x), hi.y.max(b.y)),
                )
            },
        );
        let rot_only = Similarity {
            translation: (0.0, 0.0),
            ..t
        };
        let corners =
            [lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)].map(|c| rot_only.apply(c));
        let min_x = corners.iter().map(|p| p.x).fold(f64::MAX, f64::min);
        let min_y = corners.iter().map(|p| p.y).fold(f64::MAX, f64::min);
        let max_x = corners.iter().map(|p| p.x).fold(f64::MIN, f64::max);
        let max_y = corners.iter().map(|p| p.y).fold(f64::MIN, f64::max);
        let slack = t.translation.0.abs().max(t.translation.1.abs()).ceil() + 4.0;
        let w = (max_x - min_x + 2.0 * slack).ceil() as usize;
        let h = (max_y - min_y + 2.0 * slack).ceil() as usize;
        let origin = Point::new(slack - min_x, slack - min_y);
        let full = Similarity {
            translation: (origin.x + t.translation.0, origin.y + t.translation.1),
            ..t
        };
        BinaryShape::from_fn(id, w, h, |x, y| {
            self.contains(full.invert(Point::new(x as f64, y as f64)))
        })
    }
}

fn p(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

fn centered(id: &str, size: usize, f: impl Fn(f64, f64) -> bool) -> BinaryShape {
    let c = (size as f64 - 1.0) / 2.0;
    BinaryShape::from_fn(id, size, size, |x, y| f(x as f64 - c, y as f64 - c))
}

/// Digital disk of radius `r` centered on a half-pixel.
pub fn disk_shape(r: f64) -> BinaryShape {
    let size = 2 * r.ceil() as usize + 8;
    centered("disk", size, |dx, dy| dx * dx + dy * dy <= r * r)
}

/// Ring with the given outer and inner radii on a `size`-square canvas.
pub fn annulus(size: usize, outer: f64, inner: f64) -> BinaryShape {
    centered("annulus", size, |dx, dy| {
        let d2 = dx * dx + dy * dy;
        d2 <= outer * outer && d2 >= inner * inner
    })
}

/// Ellipse with major semi-axis `a` at `angle` degrees.
pub fn ellipse_shape(a: f64, b: f64, angle: f64) -> BinaryShape {
    let size = 2 * a.ceil() as usize + 8;
    let u = dir(angle);
    let v = Point::new(-u.y, u.x);
    centered("ellipse", size, |dx, dy| {
        let d = Point::new(dx, dy);
        let (s, t) = (d.dot(u) / a, d.dot(v) / b);
        s * s + t * t <= 1.0
    })
}

/// Axis-aligned square of side `s`.
pub fn square_shape(s: usize) -> BinaryShape {
    BinaryShape::from_fn("square", s + 8, s + 8, |x, y| {
        (4..4 + s).contains(&x) && (4..4 + s).contains(&y)
    })
}

/// Regular five-point star with outer radius `r` and inner radius `ri`.
pub fn star_figure(r: f64, ri: f64) -> Figure {
    let pts = (0..10)
        .map(|k| {
            let rad = if k % 2 == 0 { r } else { ri };
            let t = (90.0 + 36.0 * k as f64).to_radians();
            p(rad * t.cos(), -rad * t.sin())
        })
        .collect();
    Figure::new(vec![Primitive::Polygon(pts)])
}

/// Single vertical mirror axis, heavier at the bottom.
pub fn teardrop_figure() -> Figure {
    Figure::new(vec![
        Primitive::Disk {
            c: p(0.0, 30.0),
            r: 45.0,
        },
        Primitive::Polygon(vec![p(-38.0, 8.0), p(0.0, -90.0), p(38.0, 8.0)]),
    ])
}

pub fn teardrop(scale: f64, rotation: f64, translation: (f64, f64)) -> BinaryShape {
    teardrop_figure().rasterize("teardrop", Similarity::new(scale, rotation, translation))
}

pub fn capsule(a: Point, b: Point, r: f64) -> Primitive {
    Primitive::Capsule { a, b, r }
}

/// Twenty figures with a single clear mirror axis and unequal halves along
/// it, spanning roughly 150-200 px.
pub fn invariance_fixtures() -> Vec<(String, Figure)> {
    let mut v: Vec<(&str, Figure)> = Vec::new();
    v.push(("teardrop", teardrop_figure()));
    v.push((
        "mushroom",
        Figure::new(vec![
            Primitive::Ellipse {
                c: p(0.0, -30.0),
                a: 75.0,
                b: 40.0,
                angle: 0.0,
            },
            Primitive::Polygon(vec![
                p(-18.0, -20.0),
                p(18.0, -20.0),
                p(22.0, 80.0),
                p(-22.0, 80.0),
            ]),
        ])
        .minus(Primitive::Polygon(vec![
            p(-80.0, -20.0),
            p(80.0, -20.0),
            p(80.0, 20.0),
            p(-80.0, 20.0),
        ])),
    ));
    v.push((
        "arrow",
        Figure::new(vec![
            Primitive::Polygon(vec![p(0.0, -95.0), p(55.0, -25.0), p(-55.0, -25.0)]),
            Primitive::Polygon(vec![
                p(-16.0, -30.0),
                p(16.0, -30.0),
                p(16.0, 90.0),
                p(-16.0, 90.0),
            ]),
        ]),
    ));
    v.push((
        "vase",
        Figure::new(vec![
            Primitive::Ellipse {
                c: p(0.0, 25.0),
                a: 55.0,
                b: 60.0,
                angle: 90.0,
            },
            Primitive::Polygon(vec![
                p(-20.0, -80.0),
                p(20.0, -80.0),
                p(26.0, -20.0),
                p(-26.0, -20.0),
            ]),
            Primitive::Polygon(vec![
                p(-35.0, -95.0),
                p(35.0, -95.0),
                p(35.0, -80.0),
                p(-35.0, -80.0),
            ]),
        ]),
    ));
    v.push((
        "tree",
        Figure::new(vec![
            Primitive::Ellipse {
                c: p(0.0, -35.0),
                a: 80.0,
                b: 50.0,
                angle: 0.0,
            },
            capsule(p(0.0, 0.0), p(0.0, 90.0), 12.0),
        ]),
    ));
    v.push((
        "heart",
        Figure::new(vec![
            Primitive::Disk {
                c: p(-36.0, -30.0),
                r: 42.0,
            },
            Primitive::Disk {
                c: p(36.0, -30.0),
                r: 42.0,
            },
            Primitive::Polygon(vec![p(-74.0, -15.0), p(74.0, -15.0), p(0.0, 85.0)]),
        ]),
    ));
    v.push((
        "pin",
        Figure::new(vec![
            Primitive::Disk {
                c: p(0.0, -60.0),
                r: 22.0,
            },
            Primitive::Ellipse {
                c: p(0.0, 35.0),
                a: 60.0,
                b: 42.0,
                angle: 90.0,
            },
            Primitive::Polygon(vec![
                p(-12.0, -60.0),
                p(12.0, -60.0),
                p(20.0, 0.0),
                p(-20.0, 0.0),
            ]),
        ]),
    ));
    v.push((
        "rocket",
        Figure::new(vec![
            Primitive::Ellipse {
                c: p(0.0, -10.0),
                a: 85.0,
                b: 28.0,
                angle: 90.0,
            },
            capsule(p(0.0, 30.0), p(-65.0, 85.0), 10.0),
            capsule(p(0.0, 30.0), p(65.0, 85.0), 10.0),
            capsule(p(0.0, 60.0), p(0.0, 100.0), 9.0),
        ]),
    ));
    v.push((
        "goblet",
        Figure::new(vec![
            Primitive::Ellipse {
                c: p(0.0, -50.0),
                a: 55.0,
                b: 45.0,
                angle: 0.0,
            },
            Primitive::Polygon(vec![
                p(-8.0, -20.0),
                p(8.0, -20.0),
                p(8.0, 70.0),
                p(-8.0, 70.0),
            ]),
            Primitive::Polygon(vec![
                p(-50.0, 70.0),
                p(50.0, 70.0),
                p(50.0, 90.0),
                p(-50.0, 90.0),
            ]),
        ]),
    ));
    v.push((
        "anvil",
        Figure::new(vec![
            Primitive::Polygon(vec![
                p(-90.0, -50.0),
                p(70.0, -50.0),
                p(70.0, -15.0),
                p(-90.0, -15.0),
            ]),
            Primitive::Polygon(vec![
                p(-30.0, -15.0),
                p(30.0, -15.0),
                p(45.0, 60.0),
                p(-45.0, 60.0),
            ]),
            Primitive::Polygon(vec![
                p(-60.0, 60.0),
                p(60.0, 60.0),
                p(60.0, 85.0),
                p(-60.0, 85.0),
            ]),
        ]),
    ));
    v.push((
        "fishbody",
        Figure::new(vec![
            Primitive::Ellipse {
                c: p(-20.0, 0.0),
                a: 70.0,
                b: 38.0,
                angle: 0.0,
            },
            Primitive::Polygon(vec![p(40.0, 0.0), p(95.0, -45.0), p(95.0, 45.0)]),
        ]),
    ));
    v.push((
        "bulb",
        Figure::new(vec![
            Primitive::Disk {
                c: p(0.0, -30.0),
                r: 60.0,
            },
            capsule(p(0.0, 20.0), p(0.0, 90.0), 24.0),
        ]),
    ));
    v.push((
        "person",
        Figure::new(vec![
            Primitive::Disk {
                c: p(0.0, -80.0),
                r: 18.0,
            },
            capsule(p(0.0, -60.0), p(0.0, 20.0), 16.0),
            capsule(p(0.0, -45.0), p(-60.0, -5.0), 9.0),
            capsule(p(0.0, -45.0), p(60.0, -5.0), 9.0),
            capsule(p(0.0, 20.0), p(-35.0, 95.0), 11.0),
            capsule(p(0.0, 20.0), p(35.0, 95.0), 11.0),
        ]),
    ));
    v.push((
        "hammer",
        Figure::new(vec![
            capsule(p(-65.0, -75.0), p(65.0, -75.0), 20.0),
            capsule(p(0.0, -75.0), p(0.0, 95.0), 12.0),
        ]),
    ));
    v.push((
        "crucifix",
        Figure::new(vec![
            capsule(p(0.0, -95.0), p(0.0, 95.0), 13.0),
            capsule(p(-60.0, -40.0), p(60.0, -40.0), 13.0),
        ]),
    ));
    v.push((
        "slingshot",
        Figure::new(vec![
            capsule(p(0.0, 0.0), p(0.0, 95.0), 14.0),
            capsule(p(0.0, 0.0), p(-50.0, -85.0), 12.0),
            capsule(p(0.0, 0.0), p(50.0, -85.0), 12.0),
        ]),
    ));
    v.push((
        "airplane",
        Figure::new(vec![
            capsule(p(0.0, -95.0), p(0.0, 90.0), 14.0),
            capsule(p(-85.0, -5.0), p(85.0, -5.0), 12.0),
            capsule(p(-35.0, 80.0), p(35.0, 80.0), 9.0),
        ]),
    ));
    v.push((
        "pipe",
        Figure::new(vec![
            capsule(p(-45.0, -90.0), p(-45.0, 50.0), 15.0),
            capsule(p(-45.0, 50.0), p(45.0, 50.0), 15.0),
            capsule(p(45.0, 50.0), p(45.0, -90.0), 15.0),
        ]),
    ));
    v.push((
        "trident",
        Figure::new(vec![
            capsule(p(0.0, -90.0), p(0.0, 95.0), 10.0),
            capsule(p(-50.0, -35.0), p(50.0, -35.0), 10.0),
            capsule(p(-50.0, -35.0), p(-50.0, -85.0), 9.0),
            capsule(p(50.0, -35.0), p(50.0, -85.0), 9.0),
        ]),
    ));
    v.push((
        "rattle",
        Figure::new(vec![
            Primitive::Disk {
                c: p(0.0, 45.0),
                r: 50.0,
            },
            Primitive::Disk {
                c: p(0.0, -75.0),
                r: 24.0,
            },
            capsule(p(0.0, -75.0), p(0.0, 45.0), 10.0),
        ]),
    ));
    v.into_iter().map(|(n, f)| (n.to_string(), f)).collect()
}

/// Uniformly random similarity transform with the given scale range.
pub fn random_similarity(rng: &mut impl Rng, scale: (f64, f64)) -> Similarity {
    Similarity::new(
        rng.random_range(scale.0..=scale.1),
        rng.random_range(0..360) as f64,
        (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)),
    )
}

/// Names of the procedural classes produced by [`class_member`].
pub const CLASSES: [&str; 8] = [
    "bone", "fish", "cross", "star", "cup", "key", "stick", "bell",
];

/// One member of a procedural class. `variation` in `[0, 1]` scales the
/// per-member jitter (articulation, proportions, pose).
pub fn class_member(class: &str, rng: &mut ChaCha8Rng, variation: f64) -> Figure {
    let mut j = |amp: f64| rng.random_range(-1.0..=1.0) * amp * variation;
    match class {
        "bone" => {
            let len = 70.0 + j(10.0);
            let r = 16.0 + j(3.0);
            let w = 10.0 + j(2.0);
            Figure::new(vec![
                capsule(p(-len, 0.0), p(len, 0.0), w),
                Primitive::Disk {
                    c: p(-len, -r * 0.8),
                    r,
                },
                Primitive::Disk {
                    c: p(-len, r * 0.8),
                    r,
                },
                Primitive::Disk {
                    c: p(len, -r * 0.8),
                    r,
                },
                Primitive::Disk {
                    c: p(len, r * 0.8),
                    r,
                },
            ])
        }
        "fish" => {
            let a = 65.0 + j(10.0);
            let b = 30.0 + j(6.0);
            let bend = j(15.0);
            Figure::new(vec![
                Primitive::Ellipse {
                    c: p(0.0, 0.0),
                    a,
                    b,
                    angle: bend * 0.3,
                },
                Primitive::Polygon(vec![
                    p(a - 10.0, 0.0),
                    p(a + 40.0, -35.0 + bend),
                    p(a + 30.0, 0.0),
                    p(a + 40.0, 35.0 + bend),
                ]),
            ])
        }
        "cross" => {
            let arm = 70.0 + j(12.0);
            let w = 14.0 + j(3.0);
            let tilt = j(8.0);
            Figure::new(vec![
                capsule(p(-arm, 0.0), p(arm, 0.0), w),
                capsule(
                    dir(90.0 + tilt) * (arm * 0.9),
                    dir(270.0 + tilt) * (arm * 1.1),
                    w,
                ),
            ])
        }
        "star" => {
            let r = 80.0 + j(10.0);
            let ri = 34.0 + j(6.0);
            star_figure(r, ri)
        }
        "cup" => {
            let w = 45.0 + j(6.0);
            let h = 60.0 + j(8.0);
            let hr = 22.0 + j(4.0);
            Figure::new(vec![
                Primitive::Polygon(vec![p(-w, -h), p(w, -h), p(w * 0.8, h), p(-w * 0.8, h)]),
                Primitive::Disk {
                    c: p(w, 0.0),
                    r: hr,
                },
            ])
            .minus(Primitive::Disk {
                c: p(w + 4.0, 0.0),
                r: hr * 0.5,
            })
        }
        "key" => {
            let shaft = 85.0 + j(10.0);
            let bow = 32.0 + j(5.0);
            let teeth = 2 + (j(1.0).abs() * 1.5) as usize;
            let mut add = vec![
                Primitive::Disk {
                    c: p(-shaft, 0.0),
                    r: bow,
                },
                capsule(p(-shaft, 0.0), p(shaft * 0.9, 0.0), 9.0),
            ];
            for t in 0..=teeth {
                let x = shaft * 0.9 - 18.0 * t as f64;
                add.push(Primitive::Polygon(vec![
                    p(x - 6.0, 0.0),
                    p(x + 6.0, 0.0),
                    p(x + 6.0, 26.0),
                    p(x - 6.0, 26.0),
                ]));
            }
            Figure::new(add).minus(Primitive::Disk {
                c: p(-shaft - 8.0, 0.0),
                r: bow * 0.4,
            })
        }
        "stick" => {
            // articulated limb: three segments with random joint angles
            let mut pts = vec![p(-80.0, 0.0)];
            let mut heading: f64 = j(20.0);
            for _ in 0..3 {
                let last = *pts.last().unwrap();
                pts.push(last + dir(heading) * (55.0 + j(8.0)));
                heading += 35.0 + j(25.0);
            }
            Figure::new(pts.windows(2).map(|s| capsule(s[0], s[1], 11.0)).collect())
        }
        _ => {
            // bell
            let top = 28.0 + j(5.0);
            let bottom = 68.0 + j(8.0);
            let h = 55.0 + j(6.0);
            Figure::new(vec![
                Primitive::Polygon(vec![p(-top, -h), p(top, -h), p(bottom, h), p(-bottom, h)]),
                Primitive::Disk {
                    c: p(0.0, -h),
                    r: top,
                },
                Primitive::Disk {
                    c: p(0.0, h + 8.0),
                    r: 14.0,
                },
            ])
        }
    }
}

/// A labeled gallery of `per_class` members for each of `classes`, with
/// random pose. Ids follow the `class-k` convention.
pub fn gallery(classes: &[&str], per_class: usize, variation: f64, seed: u64) -> Vec<BinaryShape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in classes {
        for k in 1..=per_class {
            let fig = class_member(class, &mut rng, variation);
            let t = Similarity::new(
                rng.random_range(0.6..1.0),
                rng.random_range(0..360) as f64,
                (0.0, 0.0),
            );
            out.push(fig.rasterize(&format!("{class}-{k}"), t).with_label(*class));
        }
    }
    out
}

/// Random symmetric distances over blocks of the given sizes. Within-block
/// distances lie in `[0.1, 1]`, cross-block ones in `[gap, 1.5 gap]`.
/// Returns the matrix and the block label of every point.
pub fn planted_distances(sizes: &[usize], gap: f64, seed: u64) -> (DistanceMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();
    let d = DistanceMatrix::from_fn(labels.len(), |i, j| {
        if labels[i] == labels[j] {
            rng.random_range(0.1..=1.0)
        } else {
            rng.random_range(gap..=1.5 * gap)
        }
    });
    (d, labels)
}

/// Roles of the three classes in [`confuser_index`].
pub const CONFUSER_CLASSES: [&str; 3] = ["target", "confuser", "other"];

/// A feature-level gallery of three classes of ten and one query. The query
/// belongs to `target` in global feature space, but its nearest local
/// neighbors are mostly `confuser` members; `other` is far on both axes.
/// The index carries no contour descriptors, so it answers member queries
/// and the returned query only.
pub fn confuser_index(seed: u64, config: &BuildConfig) -> Result<(RetrievalIndex, QueryFeatures)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = 10;
    let class: Vec<usize> = (0..3 * per).map(|i| i / per).collect();
    let counts = [
        SkeletonFeature {
            turning_pts: 1,
            end_pts: 2,
            t_junction_pts: 0,
            cross_junction_pts: 0,
        },
        SkeletonFeature {
            turning_pts: 4,
            end_pts: 6,
            t_junction_pts: 2,
            cross_junction_pts: 1,
        },
        SkeletonFeature {
            turning_pts: 2,
            end_pts: 4,
            t_junction_pts: 1,
            cross_junction_pts: 0,
        },
    ];
    let centers = [0.2, 0.8, 0.5];
    let raw_of = |c: usize, rng: &mut ChaCha8Rng| {
        let mut v = [0.0; 9];
        for x in &mut v {
            *x = centers[c] + rng.random_range(-0.05..0.05);
        }
        RawGlobalFeature {
            skeleton: counts[c],
            wavelet: WaveletFeature {
                responses: [v[0], v[1], v[2], v[3], v[4]],
            },
            geometric: GeometricFeature {
                aspect_ratio: v[5],
                circularity: v[6],
                symmetry: v[7],
                solidity: v[8],
            },
        }
    };
    let raw_global: Vec<RawGlobalFeature> = class.iter().map(|&c| raw_of(c, &mut rng)).collect();
    let query_raw = raw_of(0, &mut rng);
    let scaling = FeatureScaling::fit(&raw_global);
    let global = raw_global
        .iter()
        .map(|r| GlobalFeature::from_raw(r, &scaling))
        .collect::<Result<Vec<_>>>()?;
    let pair = |a: usize, b: usize| match (a.min(b), a.max(b)) {
        (x, y) if x == y => (0.05, 0.15),
        (0, 1) => (0.3, 0.4),
        _ => (1.0, 1.5),
    };
    let distances = DistanceMatrix::from_fn(class.len(), |i, j| {
        let (lo, hi) = pair(class[i], class[j]);
        rng.random_range(lo..hi)
    });
    let query_distances = class
        .iter()
        .map(|&c| match c {
            0 => rng.random_range(0.22..0.3),
            1 => rng.random_range(0.1..0.2),
            _ => rng.random_range(1.0..1.5),
        })
        .collect();
    let (clusters, forest, relevance) = train_stage_one(&global, &distances, config)?;
    let index = RetrievalIndex {
        config: config.clone(),
        ids: class
            .iter()
            .enumerate()
            .map(|(i, &c)| format!("{}-{}", CONFUSER_CLASSES[c], i % per + 1))
            .collect(),
        labels: class
            .iter()
            .map(|&c| Some(CONFUSER_CLASSES[c].to_string()))
            .collect(),
        raw_global,
        scaling,
        global,
        descriptors: Vec::new(),
        distances,
        clusters,
        forest,
        relevance,
    };
    let query = QueryFeatures {
        id: "query".into(),
        global: GlobalFeature::from_raw(&query_raw, &index.scaling)?,
        distances: query_distances,
    };
    Ok((index, query))
}
