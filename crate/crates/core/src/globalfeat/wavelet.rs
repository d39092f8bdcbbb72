//! Haar-like symmetry filter responses.

use crate::preprocess::{NormalizedShape, FILL_FRACTION};

/// Half-width of the negative middle band of the 3-band filters, as a
/// fraction of the raster. The band splits a centered disk of diameter
/// `FILL_FRACTION * R` into equal-area inner and outer parts.
pub const MIDDLE_BAND_FRACTION: f64 = 0.404 * FILL_FRACTION / 2.0;

/// The 5-D wavelet feature: 2-band vertical split, 2-band horizontal split,
/// 3-band vertical, 3-band horizontal, 2x2 checkerboard.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveletFeature {
    pub responses: [f64; 5],
}

/// Filter signs at pixel offset `(u, v)` from the raster center.
fn filters(u: f64, v: f64, band: f64) -> [f64; 5] {
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    [
        sign(u < 0.0),
        sign(v < 0.0),
        sign(u.abs() > band),
        sign(v.abs() > band),
        sign((u < 0.0) == (v < 0.0)),
    ]
}

pub fn wavelet_features(shape: &NormalizedShape) -> WaveletFeature {
    let g = &shape.grid;
    let cx = (g.width as f64 - 1.0) / 2.0;
    let cy = (g.height as f64 - 1.0) / 2.0;
    let band = MIDDLE_BAND_FRACTION * g.width.max(g.height) as f64;
    let mut sums = [0.0; 5];
    let mut area = 0.0;
    for (x, y) in g.foreground() {
        let f = filters(x as f64 - cx, y as f64 - cy, band);
        for k in 0..5 {
            sums[k] += f[k];
        }
        area += 1.0;
    }
    let responses = if area == 0.0 {
        [0.0; 5]
    } else {
        sums.map(|s| (s.abs() / area).min(1.0))
    };
    WaveletFeature { responses }
}
