//! The 13-D global feature: skeleton salient-point counts, Haar-like
//! symmetry responses, and geometric descriptors.

mod geometric;
mod skeleton;
mod wavelet;

pub use geometric::{geometric_features, GeometricFeature};
pub use skeleton::{prune_skeleton, salient_points, skeletonize, Skeleton, SkeletonFeature};
pub use wavelet::{wavelet_features, WaveletFeature, MIDDLE_BAND_FRACTION};

use crate::error::{Result, TsrError};
use crate::preprocess::{NormalizedShape, DEFAULT_SMOOTHING_SIGMA};

pub const GLOBAL_DIM: usize = 13;

/// Index ranges of the three feature groups within a [`GlobalFeature`].
pub const SKELETON_DIMS: std::ops::Range<usize> = 0..4;
pub const WAVELET_DIMS: std::ops::Range<usize> = 4..9;
pub const GEOMETRIC_DIMS: std::ops::Range<usize> = 9..13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalParams {
    pub min_branch_frac: f64,
    pub turn_angle_deg: f64,
    pub turn_arm: usize,
    pub smoothing_sigma: f64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        GlobalParams {
            min_branch_frac: 0.05,
            turn_angle_deg: 45.0,
            turn_arm: 5,
            smoothing_sigma: DEFAULT_SMOOTHING_SIGMA,
        }
    }
}

/// Unscaled per-shape features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawGlobalFeature {
    pub skeleton: SkeletonFeature,
    pub wavelet: WaveletFeature,
    pub geometric: GeometricFeature,
}

pub fn extract_raw(shape: &NormalizedShape, params: &GlobalParams) -> Result<RawGlobalFeature> {
    let skel = prune_skeleton(&skeletonize(shape)?, params.min_branch_frac);
    Ok(RawGlobalFeature {
        skeleton: salient_points(
            &skel,
            params.turn_angle_deg,
            params.turn_arm,
            params.min_branch_frac,
        ),
        wavelet: wavelet_features(shape),
        geometric: geometric_features(shape, params.smoothing_sigma)?,
    })
}

/// Gallery-wide min/max of the four skeleton counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureScaling {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl Default for FeatureScaling {
    fn default() -> Self {
        FeatureScaling {
            min: [0.0; 4],
            max: [1.0; 4],
        }
    }
}

impl FeatureScaling {
    pub fn fit<'a>(raw: impl IntoIterator<Item = &'a RawGlobalFeature>) -> Self {
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        let mut any = false;
        for r in raw {
            any = true;
            for (k, v) in r.skeleton.as_array().into_iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !any {
            return Self::default();
        }
        FeatureScaling { min, max }
    }

    /// Scaled value clamped to `[0, 1]`; a constant dimension maps to 0.
    pub fn scale(&self, k: usize, v: f64) -> f64 {
        let span = self.max[k] - self.min[k];
        if span <= 0.0 {
            0.0
        } else {
            ((v - self.min[k]) / span).clamp(0.0, 1.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalFeature(pub [f64; GLOBAL_DIM]);

impl GlobalFeature {
    pub fn from_raw(raw: &RawGlobalFeature, scaling: &FeatureScaling) -> Result<Self> {
        let mut v = [0.0; GLOBAL_DIM];
        for (k, c) in raw.skeleton.as_array().into_iter().enumerate() {
            v[k] = scaling.scale(k, c);
        }
        v[WAVELET_DIMS].copy_from_slice(&raw.wavelet.responses);
        v[GEOMETRIC_DIMS].copy_from_slice(&raw.geometric.as_array());
        if let Some(dim) = v.iter().position(|x| !x.is_finite()) {
            return Err(TsrError::NonFiniteFeature { sample: 0, dim });
        }
        Ok(GlobalFeature(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn global_feature(
    shape: &NormalizedShape,
    scaling: &FeatureScaling,
    params: &GlobalParams,
) -> Result<GlobalFeature> {
    GlobalFeature::from_raw(&extract_raw(shape, params)?, scaling)
}
