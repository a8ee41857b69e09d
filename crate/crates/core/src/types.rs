//! Shared geometric and volumetric types.
//!
//! Coordinates follow the image convention: `x` is the column, `y` the row,
//! the origin sits at the top-left pixel and `t` is the 0-based frame index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A spatio-temporal location.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    /// Euclidean distance in the image plane, ignoring `t`.
    pub fn spatial_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A ground-truth mitosis event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: usize,
    pub point: Point3,
}

/// A detected event with its confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub point: Point3,
    pub score: f64,
}

/// A dense 2-D array stored row-major (`x` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }
}

/// One grayscale frame, intensities in `[0, 1]`.
pub type Frame = Grid<f64>;

/// A boolean mask over a frame.
pub type Mask = Grid<bool>;

/// A time-lapse sequence of equally sized grayscale frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    width: usize,
    height: usize,
    frames: Vec<Frame>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SequenceError {
    #[error("a sequence needs at least one frame")]
    Empty,
    #[error("frame {index} is {found_w}x{found_h}, expected {width}x{height}")]
    MixedDimensions {
        index: usize,
        width: usize,
        height: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("frame {index} has intensity {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

impl ImageSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self, SequenceError> {
        let first = frames.first().ok_or(SequenceError::Empty)?;
        let (width, height) = (first.width, first.height);
        for (index, f) in frames.iter().enumerate() {
            if f.width != width || f.height != height {
                return Err(SequenceError::MixedDimensions {
                    index,
                    width,
                    height,
                    found_w: f.width,
                    found_h: f.height,
                });
            }
            if let Some(&value) = f.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(SequenceError::OutOfRange { index, value });
            }
        }
        Ok(Self {
            width,
            height,
            frames,
            metadata: BTreeMap::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    /// Whether `p` falls inside the pixel grid and the frame range.
    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.t >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
            && p.t <= (self.len() - 1) as f64
    }
}

/// Dimensions of a [`Volume3`], in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
}

impl Shape3 {
    /// Default candidate shape: 128x128 pixels by 16 frames.
    pub const CANDIDATE: Shape3 = Shape3::new(128, 128, 16);

    pub const fn new(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
        }
    }

    pub const fn len(&self) -> usize {
        self.width * self.height * self.depth
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn slice_len(&self) -> usize {
        self.width * self.height
    }
}

/// A real-valued volume. Voxels are stored with `x` fastest, then `y`, then `t`.
///
/// A likelihood volume (training target or network output) is a `Volume3`
/// whose values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    shape: Shape3,
    data: Vec<f64>,
}

pub type LikelihoodVolume = Volume3;

impl Volume3 {
    pub fn zeros(shape: Shape3) -> Self {
        assert!(
            shape.width >= 1 && shape.height >= 1 && shape.depth >= 1,
            "volume dims must be >= 1"
        );
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Wraps `data`, which must hold `shape.len()` finite values.
    pub fn from_vec(shape: Shape3, data: Vec<f64>) -> Option<Self> {
        let ok = shape.width >= 1
            && shape.height >= 1
            && shape.depth >= 1
            && data.len() == shape.len()
            && data.iter().all(|v| v.is_finite());
        ok.then_some(Self { shape, data })
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.index(x, y, t)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, t: usize, v: f64) {
        let i = self.index(x, y, t);
        self.data[i] = v;
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        let n = self.shape.slice_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.shape.slice_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Placement of a cropped candidate volume inside its source sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropMeta {
    /// Global column of local `x = 0`; negative when the crop hangs past the left border.
    pub origin_x: i64,
    pub origin_y: i64,
    /// Global frame of local slice 0.
    pub origin_t: i64,
    /// `true` for zero-filled slices that were never observed.
    pub pad_mask: Vec<bool>,
}

impl CropMeta {
    pub fn depth(&self) -> usize {
        self.pad_mask.len()
    }

    pub fn observed_slices(&self) -> usize {
        self.pad_mask.iter().filter(|p| !**p).count()
    }
}

pub fn to_global(local: Point3, meta: &CropMeta) -> Point3 {
    Point3 {
        x: local.x + meta.origin_x as f64,
        y: local.y + meta.origin_y as f64,
        t: local.t + meta.origin_t as f64,
    }
}

/// Inverse of [`to_global`]. The result may fall outside the crop.
pub fn to_local(global: Point3, meta: &CropMeta) -> Point3 {
    Point3 {
        x: global.x - meta.origin_x as f64,
        y: global.y - meta.origin_y as f64,
        t: global.t - meta.origin_t as f64,
    }
}
