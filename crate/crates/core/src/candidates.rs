//! Brightness-based candidate extraction.
//!
//! Each frame is box-filtered, thresholded and split into 8-connected
//! components. Component boxes are linked frame to frame by centroid
//! distance into tracks, and every track is cut into fixed-size crops: the
//! 2-D window is centred on the track's first box and held fixed, and the
//! time axis is covered by windows of `depth` frames sliding by `stride`.
//! Frames past the end of a track are zero slices flagged in the pad mask.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::types::{CropMeta, Frame, ImageSequence, Mask, Shape3, Volume3};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CandidateError {
    #[error("average filter size must be odd, positive and fit the frame, got {0}")]
    BadKernel(usize),
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Side of the square average filter (odd).
    pub d: usize,
    pub theta_bin: f64,
    /// Components with fewer pixels are ignored.
    pub min_area: usize,
    /// Maximum centroid distance, in pixels, for linking boxes across frames.
    pub tau_link: f64,
    pub crop_size: usize,
    pub crop_depth: usize,
    /// Temporal slide between consecutive windows of one track.
    pub stride: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            d: 5,
            theta_bin: 0.5,
            min_area: 9,
            tau_link: 30.0,
            crop_size: 128,
            crop_depth: 16,
            stride: 8,
        }
    }
}

impl ExtractConfig {
    pub fn crop_shape(&self) -> Shape3 {
        Shape3::new(self.crop_size, self.crop_size, self.crop_depth)
    }

    pub fn validate(&self) -> Result<(), CandidateError> {
        if self.d == 0 || self.d % 2 == 0 {
            return Err(CandidateError::BadKernel(self.d));
        }
        if !(self.theta_bin > 0.0 && self.theta_bin < 1.0) {
            return Err(CandidateError::InvalidConfig(format!(
                "theta_bin must lie in (0, 1), got {}",
                self.theta_bin
            )));
        }
        if !(self.tau_link >= 0.0) {
            return Err(CandidateError::InvalidConfig("tau_link must be >= 0".into()));
        }
        if self.crop_size == 0 || self.crop_depth == 0 || self.stride == 0 {
            return Err(CandidateError::InvalidConfig(
                "crop size, crop depth and stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Inclusive pixel bounds of one component plus its pixel centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    pub area: usize,
    pub cx: f64,
    pub cy: f64,
}

impl BoundingBox {
    pub fn centroid_distance(&self, other: &BoundingBox) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBoxes {
    pub t: usize,
    pub boxes: Vec<BoundingBox>,
}

/// Boxes over strictly consecutive frames `start_t, start_t + 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrack {
    pub id: usize,
    pub start_t: usize,
    pub boxes: Vec<BoundingBox>,
}

impl CandidateTrack {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn end_t(&self) -> usize {
        self.start_t + self.boxes.len()
    }
}

/// A fixed-size crop of the sequence, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSequence {
    pub volume: Volume3,
    pub meta: CropMeta,
    pub track_id: usize,
    /// First track frame covered by this window, relative to the track start.
    pub window_offset: usize,
}

/// Mean over the `d x d` neighbourhood of each pixel; pixels outside the
/// frame count as zero, so border outputs are darkened.
pub fn average_filter(frame: &Frame, d: usize) -> Result<Frame, CandidateError> {
    if d == 0 || d % 2 == 0 || d > frame.width.min(frame.height) {
        return Err(CandidateError::BadKernel(d));
    }
    let r = d / 2;
    let (w, h) = (frame.width, frame.height);
    // Separable: row sums, then column sums of row sums.
    let mut rows = vec![0.0f64; w * h];
    for y in 0..h {
        let src = &frame.data[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = src[lo..=hi].iter().sum();
        }
    }
    let norm = (d * d) as f64;
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let s: f64 = (lo..=hi).map(|yy| rows[yy * w + x]).sum();
            out[y * w + x] = s / norm;
        }
    }
    Ok(Frame::from_vec(w, h, out))
}

/// `mask[p] = frame[p] >= theta`.
pub fn binarize(frame: &Frame, theta: f64) -> Mask {
    Mask::from_vec(
        frame.width,
        frame.height,
        frame.data.iter().map(|&v| v >= theta).collect(),
    )
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let p = self.parent[a as usize];
            self.parent[a as usize] = self.parent[p as usize];
            a = p;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels 8-connected foreground components. Background is 0; components
/// are numbered from 1 in raster order of their first pixel. Returns the
/// label grid and the number of components.
pub fn label_components(mask: &Mask) -> (crate::types::Grid<u32>, usize) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSets::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.data[y * w + x] {
                continue;
            }
            // Already-visited neighbours: W, NW, N, NE.
            let mut current = 0u32;
            let visit = |nx: isize, ny: isize, current: &mut u32, sets: &mut DisjointSets| {
                if nx < 0 || ny < 0 || nx as usize >= w {
                    return;
                }
                let l = labels[ny as usize * w + nx as usize];
                if l == 0 {
                    return;
                }
                if *current == 0 {
                    *current = l;
                } else {
                    sets.union(*current, l);
                }
            };
            let (xi, yi) = (x as isize, y as isize);
            visit(xi - 1, yi, &mut current, &mut sets);
            visit(xi - 1, yi - 1, &mut current, &mut sets);
            visit(xi, yi - 1, &mut current, &mut sets);
            visit(xi + 1, yi - 1, &mut current, &mut sets);
            labels[y * w + x] = if current == 0 { sets.make() } else { current };
        }
    }
    // Resolve to roots, then renumber in raster order.
    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    (crate::types::Grid::from_vec(w, h, labels), count as usize)
}

/// One box per 8-connected component with at least `min_area` pixels,
/// in label order.
pub fn connected_components(mask: &Mask, min_area: usize) -> Vec<BoundingBox> {
    let (labels, count) = label_components(mask);
    let mut acc: Vec<Option<(BoundingBox, f64, f64)>> = vec![None; count];
    for y in 0..labels.height {
        for x in 0..labels.width {
            let l = *labels.get(x, y) as usize;
            if l == 0 {
                continue;
            }
            let slot = &mut acc[l - 1];
            match slot {
                None => {
                    *slot = Some((
                        BoundingBox {
                            x_min: x,
                            y_min: y,
                            x_max: x,
                            y_max: y,
                            area: 1,
                            cx: 0.0,
                            cy: 0.0,
                        },
                        x as f64,
                        y as f64,
                    ))
                }
                Some((b, sx, sy)) => {
                    b.x_min = b.x_min.min(x);
                    b.x_max = b.x_max.max(x);
                    b.y_min = b.y_min.min(y);
                    b.y_max = b.y_max.max(y);
                    b.area += 1;
                    *sx += x as f64;
                    *sy += y as f64;
                }
            }
        }
    }
    acc.into_iter()
        .flatten()
        .filter(|(b, _, _)| b.area >= min_area)
        .map(|(mut b, sx, sy)| {
            b.cx = sx / b.area as f64;
            b.cy = sy / b.area as f64;
            b
        })
        .collect()
}

/// Boxes of every frame, after filtering and thresholding.
pub fn detect_boxes(seq: &ImageSequence, cfg: &ExtractConfig) -> Result<Vec<FrameBoxes>, CandidateError> {
    cfg.validate()?;
    seq.frames()
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            let smooth = average_filter(f, cfg.d)?;
            let boxes = connected_components(&binarize(&smooth, cfg.theta_bin), cfg.min_area);
            Ok(FrameBoxes { t, boxes })
        })
        .collect()
}

/// Greedy one-to-one association between consecutive frames.
///
/// Cross pairs are taken in ascending centroid distance (ties by box index)
/// and accepted while both ends are free and the distance is at most
/// `tau_link`. Unmatched boxes open new tracks; a track ends at the first
/// frame where it is not extended. Track ids follow creation order.
pub fn link_boxes(frames: &[FrameBoxes], tau_link: f64) -> Vec<CandidateTrack> {
    let mut tracks: Vec<CandidateTrack> = Vec::new();
    // Track index for each box of the previous frame.
    let mut prev_owner: Vec<usize> = Vec::new();
    let mut prev: Option<&FrameBoxes> = None;
    for fb in frames {
        let mut owner = vec![usize::MAX; fb.boxes.len()];
        if let Some(p) = prev.filter(|p| p.t + 1 == fb.t) {
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (i, a) in p.boxes.iter().enumerate() {
                for (j, b) in fb.boxes.iter().enumerate() {
                    let d = a.centroid_distance(b);
                    if d <= tau_link {
                        pairs.push((d, i, j));
                    }
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut used_prev = vec![false; p.boxes.len()];
            for (_, i, j) in pairs {
                if used_prev[i] || owner[j] != usize::MAX {
                    continue;
                }
                used_prev[i] = true;
                owner[j] = prev_owner[i];
                tracks[prev_owner[i]].boxes.push(fb.boxes[j]);
            }
        }
        for (j, b) in fb.boxes.iter().enumerate() {
            if owner[j] == usize::MAX {
                owner[j] = tracks.len();
                tracks.push(CandidateTrack {
                    id: tracks.len(),
                    start_t: fb.t,
                    boxes: vec![*b],
                });
            }
        }
        prev_owner = owner;
        prev = Some(fb);
    }
    tracks
}

/// Window start offsets for a track of `len` frames.
///
/// Windows start at `0, stride, 2 * stride, ...`; a further window is
/// opened only while the previous one ends before the track does. A track of
/// exactly `depth` frames therefore yields a single window.
pub fn window_offsets(len: usize, depth: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    while out.last().unwrap() + depth < len {
        out.push(out.last().unwrap() + stride);
    }
    out
}

/// Cuts a track into fixed-size candidates.
pub fn build_candidates(
    track: &CandidateTrack,
    seq: &ImageSequence,
    cfg: &ExtractConfig,
) -> Vec<CandidateSequence> {
    assert!(!track.is_empty(), "empty track");
    let shape = cfg.crop_shape();
    let first = &track.boxes[0];
    let origin_x = first.cx.round() as i64 - (shape.width / 2) as i64;
    let origin_y = first.cy.round() as i64 - (shape.height / 2) as i64;
    let (sw, sh) = (seq.width() as i64, seq.height() as i64);

    window_offsets(track.len(), shape.depth, cfg.stride)
        .into_iter()
        .map(|offset| {
            let mut volume = Volume3::zeros(shape);
            let mut pad_mask = vec![true; shape.depth];
            for (s, padded) in pad_mask.iter_mut().enumerate() {
                if offset + s >= track.len() {
                    continue;
                }
                *padded = false;
                let frame = seq.frame(track.start_t + offset + s);
                let slice = volume.slice_mut(s);
                for ly in 0..shape.height {
                    let gy = origin_y + ly as i64;
                    if gy < 0 || gy >= sh {
                        continue;
                    }
                    let x0 = (-origin_x).clamp(0, shape.width as i64) as usize;
                    let x1 = (sw - origin_x).clamp(0, shape.width as i64) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    let gx0 = (origin_x + x0 as i64) as usize;
                    let row = gy as usize * seq.width();
                    slice[ly * shape.width + x0..ly * shape.width + x1]
                        .copy_from_slice(&frame.data[row + gx0..row + gx0 + (x1 - x0)]);
                }
            }
            CandidateSequence {
                volume,
                meta: CropMeta {
                    origin_x,
                    origin_y,
                    origin_t: (track.start_t + offset) as i64,
                    pad_mask,
                },
                track_id: track.id,
                window_offset: offset,
            }
        })
        .collect()
}

/// Tracks found in `seq`.
pub fn extract_tracks(
    seq: &ImageSequence,
    cfg: &ExtractConfig,
) -> Result<Vec<CandidateTrack>, CandidateError> {
    let boxes = detect_boxes(seq, cfg)?;
    Ok(link_boxes(&boxes, cfg.tau_link))
}

/// Full extraction: filter, threshold, label, link and crop.
pub fn extract(
    seq: &ImageSequence,
    cfg: &ExtractConfig,
) -> Result<Vec<CandidateSequence>, CandidateError> {
    let tracks = extract_tracks(seq, cfg)?;
    let per_track: Vec<Vec<CandidateSequence>> = tracks
        .par_iter()
        .map(|t| build_candidates(t, seq, cfg))
        .collect();
    Ok(per_track.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Grid;

    fn naive_filter(f: &Frame, d: usize) -> Frame {
        let r = d as isize / 2;
        let mut out = Frame::filled(f.width, f.height, 0.0);
        for y in 0..f.height as isize {
            for x in 0..f.width as isize {
                let mut s = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (xx, yy) = (x + dx, y + dy);
                        if xx >= 0 && yy >= 0 && (xx as usize) < f.width && (yy as usize) < f.height
                        {
                            s += f.get(xx as usize, yy as usize);
                        }
                    }
                }
                out.set(x as usize, y as usize, s / (d * d) as f64);
            }
        }
        out
    }

    #[test]
    fn filter_of_constant_is_constant_inside() {
        let f = Frame::filled(12, 10, 0.3);
        let out = average_filter(&f, 5).unwrap();
        for y in 2..8 {
            for x in 2..10 {
                assert!((out.get(x, y) - 0.3).abs() < 1e-15);
            }
        }
        // zero extension darkens the corner
        assert!(*out.get(0, 0) < 0.3);
    }

    #[test]
    fn filter_spreads_an_impulse() {
        let mut f = Frame::filled(7, 7, 0.0);
        f.set(3, 3, 1.0);
        let out = average_filter(&f, 3).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let inside = (2..=4).contains(&x) && (2..=4).contains(&y);
                let want = if inside { 1.0 / 9.0 } else { 0.0 };
                assert_eq!(*out.get(x, y), want);
            }
        }
    }

    #[test]
    fn filter_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = Frame::from_vec(32, 32, (0..1024).map(|_| rng.random::<f64>()).collect());
        let fast = average_filter(&f, 5).unwrap();
        let slow = naive_filter(&f, 5);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_rejects_bad_kernels() {
        let f = Frame::filled(4, 4, 0.0);
        assert_eq!(average_filter(&f, 4), Err(CandidateError::BadKernel(4)));
        assert_eq!(average_filter(&f, 0), Err(CandidateError::BadKernel(0)));
        assert_eq!(average_filter(&f, 5), Err(CandidateError::BadKernel(5)));
    }

    #[test]
    fn binarize_is_inclusive() {
        let f = Frame::filled(3, 3, 0.0);
        assert!(binarize(&f, 0.5).data.iter().all(|m| !m));
        let f = Frame::filled(3, 3, 0.5);
        assert!(binarize(&f, 0.5).data.iter().all(|m| *m));
    }

    fn block_mask(w: usize, h: usize, blocks: &[(usize, usize, usize)]) -> Mask {
        let mut m = Grid::filled(w, h, false);
        for &(x0, y0, s) in blocks {
            for y in y0..y0 + s {
                for x in x0..x0 + s {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[test]
    fn components_of_two_blocks() {
        assert!(connected_components(&Grid::filled(8, 8, false), 1).is_empty());
        let m = block_mask(20, 20, &[(2, 3, 3), (10, 12, 3)]);
        let boxes = connected_components(&m, 1);
        assert_eq!(boxes.len(), 2);
        assert_eq!((boxes[0].x_min, boxes[0].y_min, boxes[0].x_max, boxes[0].y_max), (2, 3, 4, 5));
        assert_eq!((boxes[1].x_min, boxes[1].y_min, boxes[1].x_max, boxes[1].y_max), (10, 12, 12, 14));
        assert_eq!(boxes[0].area, 9);
        assert_eq!((boxes[0].cx, boxes[0].cy), (3.0, 4.0));
        assert_eq!(connected_components(&m, 10).len(), 0);
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let mut m = Grid::filled(4, 4, false);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(3, 0, true);
        m.set(2, 1, true);
        // the two diagonals touch at (1,1)-(2,1)
        assert_eq!(label_components(&m).1, 1);
        let mut m = Grid::filled(4, 4, false);
        m.set(3, 0, true);
        m.set(2, 1, true);
        assert_eq!(label_components(&m).1, 1);
    }

    fn bx(cx: f64, cy: f64) -> BoundingBox {
        BoundingBox {
            x_min: cx as usize,
            y_min: cy as usize,
            x_max: cx as usize,
            y_max: cy as usize,
            area: 1,
            cx,
            cy,
        }
    }

    #[test]
    fn stationary_box_is_one_track() {
        let frames: Vec<FrameBoxes> = (0..5)
            .map(|t| FrameBoxes {
                t,
                boxes: vec![bx(10.0, 10.0)],
            })
            .collect();
        let tracks = link_boxes(&frames, 20.0);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 5);
    }

    #[test]
    fn distant_boxes_stay_apart() {
        let frames: Vec<FrameBoxes> = (0..4)
            .map(|t| FrameBoxes {
                t,
                boxes: vec![bx(10.0, 10.0), bx(110.0, 10.0)],
            })
            .collect();
        let tracks = link_boxes(&frames, 20.0);
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.len() == 4));
        assert!(tracks[0].boxes.iter().all(|b| b.cx == 10.0));
    }

    #[test]
    fn frame_gap_ends_tracks() {
        let frames = vec![
            FrameBoxes { t: 0, boxes: vec![bx(5.0, 5.0)] },
            FrameBoxes { t: 2, boxes: vec![bx(5.0, 5.0)] },
        ];
        let tracks = link_boxes(&frames, 20.0);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[1].start_t, 2);
    }

    #[test]
    fn offsets_follow_coverage_rule() {
        assert_eq!(window_offsets(1, 16, 8), vec![0]);
        assert_eq!(window_offsets(10, 16, 8), vec![0]);
        assert_eq!(window_offsets(16, 16, 8), vec![0]);
        assert_eq!(window_offsets(17, 16, 8), vec![0, 8]);
        assert_eq!(window_offsets(20, 16, 8), vec![0, 8]);
        assert_eq!(window_offsets(24, 16, 8), vec![0, 8]);
        assert_eq!(window_offsets(25, 16, 8), vec![0, 8, 16]);
        assert_eq!(window_offsets(40, 16, 8), vec![0, 8, 16, 24]);
    }

    fn flat_sequence(t: usize, w: usize, h: usize, v: f64) -> ImageSequence {
        ImageSequence::new((0..t).map(|_| Frame::filled(w, h, v)).collect()).unwrap()
    }

    fn track(start_t: usize, len: usize, cx: f64, cy: f64) -> CandidateTrack {
        CandidateTrack {
            id: 0,
            start_t,
            boxes: vec![bx(cx, cy); len],
        }
    }

    #[test]
    fn short_track_is_zero_padded() {
        let seq = flat_sequence(30, 200, 200, 0.4);
        let cfg = ExtractConfig::default();
        let cands = build_candidates(&track(3, 10, 100.0, 100.0), &seq, &cfg);
        assert_eq!(cands.len(), 1);
        let c = &cands[0];
        assert_eq!(c.volume.shape(), Shape3::new(128, 128, 16));
        assert_eq!(c.meta.origin_t, 3);
        assert_eq!((c.meta.origin_x, c.meta.origin_y), (36, 36));
        for s in 0..16 {
            let padded = s >= 10;
            assert_eq!(c.meta.pad_mask[s], padded);
            let all_zero = c.volume.slice(s).iter().all(|v| *v == 0.0);
            assert_eq!(all_zero, padded, "slice {s}");
        }
    }

    #[test]
    fn exact_fit_and_long_tracks() {
        let seq = flat_sequence(40, 200, 200, 0.4);
        let cfg = ExtractConfig::default();
        let c16 = build_candidates(&track(0, 16, 100.0, 100.0), &seq, &cfg);
        assert_eq!(c16.len(), 1);
        assert!(c16[0].meta.pad_mask.iter().all(|p| !p));
        let c20 = build_candidates(&track(0, 20, 100.0, 100.0), &seq, &cfg);
        assert_eq!(c20.iter().map(|c| c.window_offset).collect::<Vec<_>>(), vec![0, 8]);
        assert_eq!(c20[1].meta.origin_t, 8);
        assert_eq!(c20[1].meta.observed_slices(), 12);
    }

    #[test]
    fn crop_past_border_is_zero_filled() {
        let seq = flat_sequence(4, 100, 80, 0.7);
        let cfg = ExtractConfig::default();
        let c = &build_candidates(&track(0, 4, 5.0, 5.0), &seq, &cfg)[0];
        assert_eq!((c.meta.origin_x, c.meta.origin_y), (-59, -59));
        assert_eq!(c.volume.get(58, 58, 0), 0.0);
        assert_eq!(c.volume.get(59, 59, 0), 0.7);
        assert_eq!(c.volume.get(127, 127, 0), 0.7);
        // right/bottom border: image ends at x = 99 -> local 158, beyond crop
        let c = &build_candidates(&track(0, 4, 95.0, 75.0), &seq, &cfg)[0];
        assert_eq!(c.meta.origin_x, 31);
        assert_eq!(c.volume.get(68, 0, 0), 0.7);
        assert_eq!(c.volume.get(69, 0, 0), 0.0);
    }

    #[test]
    fn dark_sequence_has_no_candidates() {
        let seq = flat_sequence(20, 64, 64, 0.1);
        assert!(extract(&seq, &ExtractConfig::default()).unwrap().is_empty());
    }
}
