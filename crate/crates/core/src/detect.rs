//! From predicted likelihood volumes to global detections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{self, CandidateError, CandidateSequence, ExtractConfig};
use crate::net::{NetError, Network, Params};
use crate::types::{to_global, Detection, ImageSequence, Point3, Volume3};

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    Candidates(#[from] CandidateError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid detection config: {0}")]
    InvalidConfig(String),
}

/// Half-extent of a box neighbourhood, per axis, in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Radius3 {
    pub x: usize,
    pub y: usize,
    pub t: usize,
}

impl Radius3 {
    pub const fn new(x: usize, y: usize, t: usize) -> Self {
        Self { x, y, t }
    }

    /// Whether `a` and `b` differ by at most the radius on every axis.
    pub fn covers(&self, a: &Point3, b: &Point3) -> bool {
        (a.x - b.x).abs() <= self.x as f64
            && (a.y - b.y).abs() <= self.y as f64
            && (a.t - b.t).abs() <= self.t as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub theta_peak: f64,
    pub peak_radius: Radius3,
    pub merge_radius: Radius3,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            theta_peak: 0.3,
            peak_radius: Radius3::new(5, 5, 2),
            merge_radius: Radius3::new(7, 7, 3),
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.theta_peak > 0.0 && self.theta_peak < 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "theta_peak must lie in (0, 1), got {}",
                self.theta_peak
            )));
        }
        Ok(())
    }
}

/// Local maxima of `vol` with value at least `theta`.
///
/// A voxel qualifies when it beats every other voxel of its box
/// neighbourhood. Equal values are resolved in favour of the voxel that comes
/// first in `(t, y, x)` order, so a flat plateau yields exactly one point.
/// Slices flagged in `pad_mask` are neither reported nor compared against.
/// Results are in `(t, y, x)` order, as local coordinates.
pub fn local_maxima(
    vol: &Volume3,
    theta: f64,
    radius: Radius3,
    pad_mask: Option<&[bool]>,
) -> Vec<(Point3, f64)> {
    let s = vol.shape();
    let padded = |t: usize| pad_mask.is_some_and(|m| m[t]);
    let mut out = Vec::new();
    for t in 0..s.depth {
        if padded(t) {
            continue;
        }
        let (t0, t1) = (t.saturating_sub(radius.t), (t + radius.t).min(s.depth - 1));
        for y in 0..s.height {
            let (y0, y1) = (y.saturating_sub(radius.y), (y + radius.y).min(s.height - 1));
            for x in 0..s.width {
                let v = vol.get(x, y, t);
                if v < theta {
                    continue;
                }
                let (x0, x1) = (x.saturating_sub(radius.x), (x + radius.x).min(s.width - 1));
                let me = (t, y, x);
                let wins = (t0..=t1).filter(|&tt| !padded(tt)).all(|tt| {
                    (y0..=y1).all(|yy| {
                        let row = &vol.slice(tt)[yy * s.width..];
                        (x0..=x1).all(|xx| {
                            let n = row[xx];
                            v > n || (v == n && me <= (tt, yy, xx))
                        })
                    })
                });
                if wins {
                    out.push((Point3::new(x as f64, y as f64, t as f64), v));
                }
            }
        }
    }
    out
}

fn raster_key(p: &Point3) -> (f64, f64, f64) {
    (p.t, p.y, p.x)
}

fn by_raster(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    let (ka, kb) = (raster_key(&a.point), raster_key(&b.point));
    ka.0.total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
}

/// Greedy suppression: in descending score order (ties by `(t, y, x)`), a
/// detection is dropped when it lies within `radius` on every axis of one
/// already kept. Output is sorted by `(t, y, x)`.
pub fn merge_detections(dets: &[Detection], radius: Radius3) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(by_raster(a, b)));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if !kept.iter().any(|k| radius.covers(&k.point, &d.point)) {
            kept.push(*d);
        }
    }
    sort_detections(&mut kept);
    kept
}

pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(by_raster);
}

/// Peaks of one predicted volume in global coordinates, restricted to the
/// image frame.
pub fn candidate_detections(
    cand: &CandidateSequence,
    prediction: &Volume3,
    seq: &ImageSequence,
    cfg: &DetectConfig,
) -> Vec<Detection> {
    local_maxima(
        prediction,
        cfg.theta_peak,
        cfg.peak_radius,
        Some(&cand.meta.pad_mask),
    )
    .into_iter()
    .map(|(p, score)| Detection {
        point: to_global(p, &cand.meta),
        score,
    })
    .filter(|d| seq.contains(&d.point))
    .collect()
}

/// Extract candidates, predict each one, collect peaks and merge overlaps.
pub fn detect(
    seq: &ImageSequence,
    net: &Network,
    params: &Params<f32>,
    extract_cfg: &ExtractConfig,
    cfg: &DetectConfig,
) -> Result<Vec<Detection>, DetectError> {
    cfg.validate()?;
    let cands = candidates::extract(seq, extract_cfg)?;
    detect_in_candidates(&cands, seq, net, params, cfg)
}

/// As [`detect`], for candidates that were already extracted.
pub fn detect_in_candidates(
    cands: &[CandidateSequence],
    seq: &ImageSequence,
    net: &Network,
    params: &Params<f32>,
    cfg: &DetectConfig,
) -> Result<Vec<Detection>, DetectError> {
    let per_cand: Vec<Vec<Detection>> = cands
        .par_iter()
        .map(|c| {
            let pred = net.predict(params, &c.volume)?;
            Ok(candidate_detections(c, &pred, seq, cfg))
        })
        .collect::<Result<_, NetError>>()?;
    let all: Vec<Detection> = per_cand.into_iter().flatten().collect();
    Ok(merge_detections(&all, cfg.merge_radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{single_annotation_map, SigmaParams};
    use crate::types::Shape3;

    #[test]
    fn gaussian_blob_has_one_maximum() {
        let m = single_annotation_map(
            Point3::new(40.0, 70.0, 9.0),
            &SigmaParams::default(),
            Shape3::CANDIDATE,
        )
        .unwrap();
        let peaks = local_maxima(&m, 0.3, Radius3::new(5, 5, 2), None);
        assert_eq!(peaks, vec![(Point3::new(40.0, 70.0, 9.0), 1.0)]);
    }

    #[test]
    fn plateau_yields_its_first_voxel() {
        let mut v = Volume3::zeros(Shape3::new(16, 16, 8));
        v.data_mut().iter_mut().for_each(|x| *x = 0.9);
        let peaks = local_maxima(&v, 0.3, Radius3::new(5, 5, 2), None);
        assert_eq!(peaks, vec![(Point3::new(0.0, 0.0, 0.0), 0.9)]);
    }

    #[test]
    fn below_threshold_and_padded_slices_are_skipped() {
        let mut v = Volume3::zeros(Shape3::new(8, 8, 4));
        v.set(2, 2, 1, 0.2);
        v.set(5, 5, 3, 0.8);
        assert!(local_maxima(&v, 0.3, Radius3::new(1, 1, 1), None).len() == 1);
        let mask = [false, false, false, true];
        assert!(local_maxima(&v, 0.3, Radius3::new(1, 1, 1), Some(&mask)).is_empty());
    }

    fn det(x: f64, y: f64, t: f64, score: f64) -> Detection {
        Detection {
            point: Point3::new(x, y, t),
            score,
        }
    }

    #[test]
    fn merge_drops_duplicates_and_keeps_distant() {
        let r = Radius3::new(7, 7, 3);
        let d = det(10.0, 10.0, 5.0, 0.8);
        assert_eq!(merge_detections(&[d, d], r), vec![d]);
        let far = [det(10.0, 10.0, 5.0, 0.8), det(30.0, 30.0, 20.0, 0.7), det(50.0, 10.0, 5.0, 0.6)];
        assert_eq!(merge_detections(&far, r).len(), 3);
        // the weaker neighbour goes, whichever order it arrives in
        let pair = [det(12.0, 10.0, 6.0, 0.5), det(10.0, 10.0, 5.0, 0.9)];
        assert_eq!(merge_detections(&pair, r), vec![pair[1]]);
    }

    #[test]
    fn merge_is_idempotent() {
        let r = Radius3::new(7, 7, 3);
        let ds: Vec<Detection> = (0..30)
            .map(|i| det((i * 5 % 40) as f64, (i * 3 % 25) as f64, (i % 9) as f64, (i % 7) as f64 / 7.0))
            .collect();
        let once = merge_detections(&ds, r);
        assert_eq!(merge_detections(&once, r), once);
    }
}
