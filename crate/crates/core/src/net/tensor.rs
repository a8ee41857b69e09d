use crate::types::{Shape3, Volume3};

use super::real::Real;

/// A multi-channel volume, channel-major; within a channel `x` is fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    pub channels: usize,
    pub shape: Shape3,
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn zeros(channels: usize, shape: Shape3) -> Self {
        Self {
            channels,
            shape,
            data: vec![R::ZERO; channels * shape.len()],
        }
    }

    pub fn from_volume(v: &Volume3) -> Self {
        Self {
            channels: 1,
            shape: v.shape(),
            data: v.data().iter().map(|&x| R::from_f64(x)).collect(),
        }
    }

    /// Converts channel 0 back into a [`Volume3`].
    pub fn to_volume(&self) -> Volume3 {
        let n = self.shape.len();
        Volume3::from_vec(self.shape, self.data[..n].iter().map(|v| v.to_f64()).collect())
            .expect("network produced non-finite values")
    }

    pub fn voxels(&self) -> usize {
        self.shape.len()
    }

    pub fn channel(&self, c: usize) -> &[R] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [R] {
        let n = self.shape.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn add_assign(&mut self, other: &Tensor<R>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
