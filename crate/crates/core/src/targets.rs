//! Ground-truth likelihood maps.
//!
//! Every annotation contributes an axis-aligned Gaussian bump
//! `exp(-(dx^2/sx^2 + dy^2/sy^2 + dt^2/st^2))` with peak 1 at the annotated
//! voxel; bumps are combined by a voxelwise max, so nearby events stay
//! separate peaks instead of summing into one.

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSequence;
use crate::types::{to_local, Annotation, LikelihoodVolume, Point3, Shape3, Volume3};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TargetError {
    #[error("sigma_{axis} must be positive, got {value}")]
    BadSigma { axis: &'static str, value: f64 },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Shape3, Shape3),
}

/// Spread of a peak along each axis (pixels, pixels, frames).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_t: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        Self {
            sigma_x: 5.0,
            sigma_y: 5.0,
            sigma_t: 2.0,
        }
    }
}

impl SigmaParams {
    pub fn validate(&self) -> Result<(), TargetError> {
        for (axis, value) in [("x", self.sigma_x), ("y", self.sigma_y), ("t", self.sigma_t)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(TargetError::BadSigma { axis, value });
            }
        }
        Ok(())
    }
}

/// Annotations further than this many sigmas outside the crop are ignored.
pub const INCLUSION_MARGIN_SIGMAS: f64 = 3.0;

/// The Gaussian bump of one annotation (in local coordinates) on every
/// integer voxel of `shape`.
pub fn single_annotation_map(
    ann: Point3,
    sigma: &SigmaParams,
    shape: Shape3,
) -> Result<LikelihoodVolume, TargetError> {
    sigma.validate()?;
    let mut vol = Volume3::zeros(shape);
    // The exponent separates per axis; precompute each factor.
    let ex: Vec<f64> = (0..shape.width)
        .map(|x| ((x as f64 - ann.x) / sigma.sigma_x).powi(2))
        .collect();
    let ey: Vec<f64> = (0..shape.height)
        .map(|y| ((y as f64 - ann.y) / sigma.sigma_y).powi(2))
        .collect();
    for t in 0..shape.depth {
        let et = ((t as f64 - ann.t) / sigma.sigma_t).powi(2);
        let slice = vol.slice_mut(t);
        for (y, eyv) in ey.iter().enumerate() {
            let row = &mut slice[y * shape.width..(y + 1) * shape.width];
            for (v, exv) in row.iter_mut().zip(&ex) {
                *v = (-(exv + eyv + et)).exp();
            }
        }
    }
    Ok(vol)
}

/// Voxelwise maximum. An empty list yields `None`; callers choose the shape
/// of the all-zero map themselves (see [`aggregate_max_or_zeros`]).
pub fn aggregate_max(maps: &[LikelihoodVolume]) -> Result<Option<LikelihoodVolume>, TargetError> {
    let Some(first) = maps.first() else {
        return Ok(None);
    };
    let mut out = first.clone();
    for m in &maps[1..] {
        if m.shape() != out.shape() {
            return Err(TargetError::ShapeMismatch(out.shape(), m.shape()));
        }
        for (o, &v) in out.data_mut().iter_mut().zip(m.data()) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(Some(out))
}

/// Like [`aggregate_max`], but an empty list gives an all-zero map of `shape`.
pub fn aggregate_max_or_zeros(
    maps: &[LikelihoodVolume],
    shape: Shape3,
) -> Result<LikelihoodVolume, TargetError> {
    match aggregate_max(maps)? {
        Some(m) if m.shape() != shape => Err(TargetError::ShapeMismatch(shape, m.shape())),
        Some(m) => Ok(m),
        None => Ok(Volume3::zeros(shape)),
    }
}

/// Whether a local point lies within the crop extended by the inclusion margin.
fn near_crop(p: &Point3, shape: Shape3, sigma: &SigmaParams) -> bool {
    let m = INCLUSION_MARGIN_SIGMAS;
    let within = |v: f64, n: usize, s: f64| v >= -m * s && v <= (n - 1) as f64 + m * s;
    within(p.x, shape.width, sigma.sigma_x)
        && within(p.y, shape.height, sigma.sigma_y)
        && within(p.t, shape.depth, sigma.sigma_t)
}

/// Annotations (global coordinates) mapped into the candidate, keeping only
/// those close enough to influence it.
pub fn local_annotations(
    cand: &CandidateSequence,
    anns: &[Annotation],
    sigma: &SigmaParams,
) -> Vec<Point3> {
    let shape = cand.volume.shape();
    anns.iter()
        .map(|a| to_local(a.point, &cand.meta))
        .filter(|p| near_crop(p, shape, sigma))
        .collect()
}

/// Training target of one candidate. Padded slices are forced to zero.
pub fn build_targets(
    cand: &CandidateSequence,
    anns: &[Annotation],
    sigma: &SigmaParams,
) -> Result<LikelihoodVolume, TargetError> {
    sigma.validate()?;
    let shape = cand.volume.shape();
    let maps = local_annotations(cand, anns, sigma)
        .into_iter()
        .map(|p| single_annotation_map(p, sigma, shape))
        .collect::<Result<Vec<_>, _>>()?;
    let mut target = aggregate_max_or_zeros(&maps, shape)?;
    for (t, &padded) in cand.meta.pad_mask.iter().enumerate() {
        if padded {
            target.slice_mut(t).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(target)
}
