//! Forward and backward kernels for each layer kind.
//!
//! Convolutions go through an explicit column matrix so that both passes
//! reduce to a single GEMM with a fixed summation order.

use std::borrow::Cow;

use crate::types::Shape3;

use super::real::{matmul, MatRef, Real};
use super::tensor::Tensor;

/// Geometry of a dense (non-transposed) convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn same(kernel: usize) -> Self {
        Self {
            kernel,
            stride: 1,
            pad: kernel / 2,
        }
    }

    pub fn down2() -> Self {
        Self {
            kernel: 2,
            stride: 2,
            pad: 0,
        }
    }

    fn out_dim(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_shape(&self, s: Shape3) -> Shape3 {
        Shape3::new(self.out_dim(s.width), self.out_dim(s.height), self.out_dim(s.depth))
    }

    fn taps(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

#[inline]
fn src_coord(o: usize, k: usize, g: &ConvGeom, n: usize) -> Option<usize> {
    let i = (o * g.stride + k) as isize - g.pad as isize;
    (i >= 0 && (i as usize) < n).then_some(i as usize)
}

/// Visits every (column-row, column-index, source-index) triple of the
/// column matrix, passing `None` for zero-padding taps.
fn for_each_tap(
    channels: usize,
    ins: Shape3,
    g: &ConvGeom,
    mut f: impl FnMut(usize, usize, Option<usize>),
) {
    let outs = g.out_shape(ins);
    let k = g.kernel;
    let n_out = outs.len();
    for ci in 0..channels {
        for kt in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + kt) * k + ky) * k + kx;
                    let base = row * n_out;
                    for ot in 0..outs.depth {
                        let it = src_coord(ot, kt, g, ins.depth);
                        for oy in 0..outs.height {
                            let iy = src_coord(oy, ky, g, ins.height);
                            let dst = base + (ot * outs.height + oy) * outs.width;
                            for ox in 0..outs.width {
                                let src = match (it, iy, src_coord(ox, kx, g, ins.width)) {
                                    (Some(t), Some(y), Some(x)) => Some(
                                        ((ci * ins.depth + t) * ins.height + y) * ins.width + x,
                                    ),
                                    _ => None,
                                };
                                f(row, dst + ox, src);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Column matrix of shape `(channels * k^3) x out_voxels`.
pub fn im2col<R: Real>(x: &Tensor<R>, g: &ConvGeom) -> Vec<R> {
    let outs = g.out_shape(x.shape);
    let mut col = vec![R::ZERO; x.channels * g.taps() * outs.len()];
    if g.stride == 1 {
        im2col_unit_stride(x, g, &mut col);
    } else {
        for_each_tap(x.channels, x.shape, g, |_, d, s| {
            if let Some(s) = s {
                col[d] = x.data[s];
            }
        });
    }
    col
}

// Unit stride lets each output row be filled by one contiguous copy.
fn im2col_unit_stride<R: Real>(x: &Tensor<R>, g: &ConvGeom, col: &mut [R]) {
    let ins = x.shape;
    let outs = g.out_shape(ins);
    let k = g.kernel;
    let n_out = outs.len();
    for ci in 0..x.channels {
        for kt in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + kt) * k + ky) * k + kx;
                    let dst_row = &mut col[row * n_out..(row + 1) * n_out];
                    let x_lo = g.pad.saturating_sub(kx).min(outs.width);
                    let x_hi = (ins.width + g.pad).saturating_sub(kx).min(outs.width).max(x_lo);
                    for ot in 0..outs.depth {
                        let Some(it) = src_coord(ot, kt, g, ins.depth) else {
                            continue;
                        };
                        for oy in 0..outs.height {
                            let Some(iy) = src_coord(oy, ky, g, ins.height) else {
                                continue;
                            };
                            let d = (ot * outs.height + oy) * outs.width;
                            let s = ((ci * ins.depth + it) * ins.height + iy) * ins.width;
                            let sx = x_lo + kx - g.pad;
                            dst_row[d + x_lo..d + x_hi]
                                .copy_from_slice(&x.data[s + sx..s + sx + (x_hi - x_lo)]);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input grid.
pub fn col2im<R: Real>(col: &[R], channels: usize, ins: Shape3, g: &ConvGeom) -> Tensor<R> {
    let mut out = Tensor::zeros(channels, ins);
    for_each_tap(channels, ins, g, |_, d, s| {
        if let Some(s) = s {
            out.data[s] += col[d];
        }
    });
    out
}

fn add_bias<R: Real>(t: &mut Tensor<R>, bias: &[R]) {
    for (c, &b) in bias.iter().enumerate() {
        for v in t.channel_mut(c) {
            *v += b;
        }
    }
}

fn channel_sums<R: Real>(t: &Tensor<R>) -> Vec<R> {
    (0..t.channels).map(|c| t.channel(c).iter().copied().sum()).collect()
}

/// Dense 3-D convolution. `weights` is `[out][in][kt][ky][kx]`.
pub fn conv_forward<R: Real>(
    x: &Tensor<R>,
    weights: &[R],
    bias: &[R],
    out_channels: usize,
    g: &ConvGeom,
) -> Tensor<R> {
    let outs = g.out_shape(x.shape);
    let k_dim = x.channels * g.taps();
    let col: Cow<'_, [R]> = if g.is_pointwise() {
        Cow::Borrowed(&x.data)
    } else {
        Cow::Owned(im2col(x, g))
    };
    let mut out = Tensor::zeros(out_channels, outs);
    matmul(
        MatRef::new(weights, out_channels, k_dim),
        MatRef::new(&col, k_dim, outs.len()),
        &mut out.data,
        false,
    );
    add_bias(&mut out, bias);
    out
}

/// Returns `(d_weights, d_bias, d_input)`.
pub fn conv_backward<R: Real>(
    x: &Tensor<R>,
    weights: &[R],
    out_channels: usize,
    g: &ConvGeom,
    grad_out: &Tensor<R>,
    need_input_grad: bool,
) -> (Vec<R>, Vec<R>, Option<Tensor<R>>) {
    let n_out = grad_out.voxels();
    let k_dim = x.channels * g.taps();
    let col: Cow<'_, [R]> = if g.is_pointwise() {
        Cow::Borrowed(&x.data)
    } else {
        Cow::Owned(im2col(x, g))
    };
    let mut dw = vec![R::ZERO; out_channels * k_dim];
    matmul(
        MatRef::new(&grad_out.data, out_channels, n_out),
        MatRef::transposed(&col, n_out, k_dim),
        &mut dw,
        false,
    );
    let db = channel_sums(grad_out);
    let dx = need_input_grad.then(|| {
        let mut dcol = vec![R::ZERO; k_dim * n_out];
        matmul(
            MatRef::transposed(weights, k_dim, out_channels),
            MatRef::new(&grad_out.data, out_channels, n_out),
            &mut dcol,
            false,
        );
        if g.is_pointwise() {
            Tensor {
                channels: x.channels,
                shape: x.shape,
                data: dcol,
            }
        } else {
            col2im(&dcol, x.channels, x.shape, g)
        }
    });
    (dw, db, dx)
}

/// 2x2x2 transposed convolution with stride 2. `weights` is `[out][kt][ky][kx][in]`.
pub fn up2_forward<R: Real>(
    x: &Tensor<R>,
    weights: &[R],
    bias: &[R],
    out_channels: usize,
) -> Tensor<R> {
    let ins = x.shape;
    let n_in = ins.len();
    let rows = out_channels * 8;
    let mut y = vec![R::ZERO; rows * n_in];
    matmul(
        MatRef::new(weights, rows, x.channels),
        MatRef::new(&x.data, x.channels, n_in),
        &mut y,
        false,
    );
    let outs = Shape3::new(ins.width * 2, ins.height * 2, ins.depth * 2);
    let mut out = Tensor::zeros(out_channels, outs);
    for_each_up2(out_channels, ins, |row, n, o| out.data[o] = y[row * n_in + n]);
    add_bias(&mut out, bias);
    out
}

/// Returns `(d_weights, d_bias, d_input)`.
pub fn up2_backward<R: Real>(
    x: &Tensor<R>,
    weights: &[R],
    out_channels: usize,
    grad_out: &Tensor<R>,
    need_input_grad: bool,
) -> (Vec<R>, Vec<R>, Option<Tensor<R>>) {
    let ins = x.shape;
    let n_in = ins.len();
    let rows = out_channels * 8;
    let mut dy = vec![R::ZERO; rows * n_in];
    for_each_up2(out_channels, ins, |row, n, o| dy[row * n_in + n] = grad_out.data[o]);
    let mut dw = vec![R::ZERO; rows * x.channels];
    matmul(
        MatRef::new(&dy, rows, n_in),
        MatRef::transposed(&x.data, n_in, x.channels),
        &mut dw,
        false,
    );
    let db = channel_sums(grad_out);
    let dx = need_input_grad.then(|| {
        let mut dx = Tensor::zeros(x.channels, ins);
        matmul(
            MatRef::transposed(weights, x.channels, rows),
            MatRef::new(&dy, rows, n_in),
            &mut dx.data,
            false,
        );
        dx
    });
    (dw, db, dx)
}

/// Maps (row of the `[out*8] x in_voxels` product, input voxel) to the output voxel.
fn for_each_up2(out_channels: usize, ins: Shape3, mut f: impl FnMut(usize, usize, usize)) {
    let (ow, oh, od) = (ins.width * 2, ins.height * 2, ins.depth * 2);
    for co in 0..out_channels {
        for kt in 0..2 {
            for ky in 0..2 {
                for kx in 0..2 {
                    let row = co * 8 + (kt * 2 + ky) * 2 + kx;
                    for t in 0..ins.depth {
                        for y in 0..ins.height {
                            let n0 = (t * ins.height + y) * ins.width;
                            let o0 = ((co * od + 2 * t + kt) * oh + 2 * y + ky) * ow + kx;
                            for x in 0..ins.width {
                                f(row, n0 + x, o0 + 2 * x);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Parametric ReLU with one learned negative slope per channel.
pub fn prelu_forward<R: Real>(x: &Tensor<R>, slopes: &[R]) -> Tensor<R> {
    let mut out = x.clone();
    for (c, &a) in slopes.iter().enumerate() {
        for v in out.channel_mut(c) {
            if *v <= R::ZERO {
                *v *= a;
            }
        }
    }
    out
}

/// Returns `(d_slopes, d_input)`.
pub fn prelu_backward<R: Real>(
    x: &Tensor<R>,
    slopes: &[R],
    grad_out: &Tensor<R>,
) -> (Vec<R>, Tensor<R>) {
    let mut dx = grad_out.clone();
    let mut ds = vec![R::ZERO; slopes.len()];
    for (c, &a) in slopes.iter().enumerate() {
        let xs = x.channel(c);
        let mut acc = R::ZERO;
        for (g, &v) in dx.channel_mut(c).iter_mut().zip(xs) {
            if v <= R::ZERO {
                acc += *g * v;
                *g *= a;
            }
        }
        ds[c] = acc;
    }
    (ds, dx)
}

pub fn sigmoid<R: Real>(v: R) -> R {
    R::ONE / (R::ONE + (-v).exp())
}

pub fn sigmoid_forward<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    Tensor {
        channels: x.channels,
        shape: x.shape,
        data: x.data.iter().map(|&v| sigmoid(v)).collect(),
    }
}

/// Uses the forward output `y`: `dy/dx = y (1 - y)`.
pub fn sigmoid_backward<R: Real>(y: &Tensor<R>, grad_out: &Tensor<R>) -> Tensor<R> {
    Tensor {
        channels: y.channels,
        shape: y.shape,
        data: y
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&s, &g)| g * s * (R::ONE - s))
            .collect(),
    }
}
