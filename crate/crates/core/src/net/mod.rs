//! A small 3-D fully convolutional encoder-decoder that maps a candidate
//! volume to a likelihood volume of the same shape.
//!
//! Forward and backward passes are written out by hand per layer kind (see
//! [`layers`]) and are generic over [`Real`] so the same code runs in `f32`
//! for training and in `f64` for gradient checking.

pub mod arch;
pub mod gradcheck;
pub mod layers;
pub mod real;
pub mod tensor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::types::{Shape3, Volume3};

pub use arch::{Arch, LayerKind, LayerSpec, NetConfig};
pub use real::Real;
pub use tensor::Tensor;

use layers::ConvGeom;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Initial negative slope of every PReLU channel.
pub const PRELU_INIT: f64 = 0.25;

/// Flat parameter vector; per-layer views come from [`Network::layer_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Params<R = f32> {
    pub values: Vec<R>,
}

impl<R: Real> Params<R> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<S: Real>(&self) -> Params<S> {
        Params {
            values: self.values.iter().map(|v| S::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.to_f64().is_finite())
    }
}

/// Borrowed parameters of one layer. For PReLU `weights` holds the slopes.
#[derive(Debug, Clone, Copy)]
pub struct LayerParams<'a, R> {
    pub weights: &'a [R],
    pub bias: &'a [R],
}

/// Every layer output of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<R> {
    pub outputs: Vec<Tensor<R>>,
}

impl<R: Real> Trace<R> {
    pub fn output(&self) -> &Tensor<R> {
        self.outputs.last().expect("trace of an empty network")
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<R> {
    pub params: Vec<R>,
    pub input: Option<Tensor<R>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Arch,
    offsets: Vec<usize>,
}

impl Network {
    pub fn new(arch: Arch) -> Result<Self, NetError> {
        arch.validate()?;
        let mut offsets = Vec::with_capacity(arch.layers.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for l in &arch.layers {
            acc += l.param_count();
            offsets.push(acc);
        }
        Ok(Self { arch, offsets })
    }

    pub fn from_config(cfg: &NetConfig) -> Result<Self, NetError> {
        Self::new(Arch::encoder_decoder(cfg)?)
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn layer_range(&self, layer: usize) -> std::ops::Range<usize> {
        self.offsets[layer]..self.offsets[layer + 1]
    }

    pub fn layer_params<'a, R>(&self, layer: usize, params: &'a [R]) -> LayerParams<'a, R> {
        let (w, _) = params[self.layer_range(layer)].split_at(self.arch.layers[layer].weight_count());
        let bias = &params[self.offsets[layer] + w.len()..self.offsets[layer + 1]];
        LayerParams { weights: w, bias }
    }

    /// Sets the bias of the last affine layer to `logit(prior)`, so that a
    /// fresh network predicts roughly `prior` everywhere instead of 0.5.
    ///
    /// Without this, the early steps of training mostly fight the 0.5 output
    /// on the background and push the bright cell regions into sigmoid
    /// saturation, where the gradient towards the sparse peaks vanishes.
    pub fn set_head_prior(&self, params: &mut Params<f32>, prior: f64) -> Result<(), NetError> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(NetError::InvalidArch(format!(
                "head prior must lie in (0, 1), got {prior}"
            )));
        }
        let head = self
            .arch
            .layers
            .iter()
            .rposition(|l| l.bias_count() > 0)
            .ok_or_else(|| NetError::InvalidArch("network has no biased layer".into()))?;
        let r = self.layer_range(head);
        let n = self.arch.layers[head].bias_count();
        let logit = (prior / (1.0 - prior)).ln() as f32;
        params.values[r.end - n..r.end].iter_mut().for_each(|b| *b = logit);
        Ok(())
    }

    /// He-normal weights (variance `2 / fan_in`), zero biases, PReLU slopes at
    /// [`PRELU_INIT`]. Deterministic per seed.
    pub fn init_params(&self, seed: u64) -> Params<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.param_count());
        for l in &self.arch.layers {
            match l.kind {
                LayerKind::Conv3d | LayerKind::Down2 | LayerKind::Up2 => {
                    let std = (2.0 / l.fan_in() as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("positive std");
                    values.extend((0..l.weight_count()).map(|_| normal.sample(&mut rng) as f32));
                    values.extend(std::iter::repeat_n(0.0f32, l.bias_count()));
                }
                LayerKind::Activation => {
                    values.extend(std::iter::repeat_n(PRELU_INIT as f32, l.weight_count()))
                }
                LayerKind::Sigmoid | LayerKind::SkipAdd => {}
            }
        }
        debug_assert_eq!(values.len(), self.param_count());
        Params { values }
    }

    pub fn check_input(&self, shape: Shape3) -> Result<(), NetError> {
        let m = 1usize << self.arch.depth();
        for (name, n) in [
            ("width", shape.width),
            ("height", shape.height),
            ("depth", shape.depth),
        ] {
            if n == 0 || n % m != 0 {
                return Err(NetError::Shape(format!(
                    "{name} {n} is not a positive multiple of {m}"
                )));
            }
        }
        Ok(())
    }

    fn check_params<R>(&self, params: &[R]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(NetError::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    pub fn forward_trace<R: Real>(
        &self,
        params: &[R],
        input: &Tensor<R>,
    ) -> Result<Trace<R>, NetError> {
        self.check_params(params)?;
        self.check_input(input.shape)?;
        if input.channels != 1 {
            return Err(NetError::Shape("network input must have one channel".into()));
        }
        let mut outputs: Vec<Tensor<R>> = Vec::with_capacity(self.arch.layers.len());
        for (i, l) in self.arch.layers.iter().enumerate() {
            let x = if i == 0 { input } else { &outputs[i - 1] };
            let p = self.layer_params(i, params);
            let y = match l.kind {
                LayerKind::Conv3d => layers::conv_forward(
                    x,
                    p.weights,
                    p.bias,
                    l.out_channels,
                    &ConvGeom::same(l.kernel),
                ),
                LayerKind::Down2 => {
                    layers::conv_forward(x, p.weights, p.bias, l.out_channels, &ConvGeom::down2())
                }
                LayerKind::Up2 => layers::up2_forward(x, p.weights, p.bias, l.out_channels),
                LayerKind::Activation => layers::prelu_forward(x, p.weights),
                LayerKind::Sigmoid => layers::sigmoid_forward(x),
                LayerKind::SkipAdd => {
                    let mut y = x.clone();
                    y.add_assign(&outputs[l.skip_from.expect("validated")]);
                    y
                }
            };
            outputs.push(y);
        }
        Ok(Trace { outputs })
    }

    pub fn forward<R: Real>(&self, params: &[R], input: &Tensor<R>) -> Result<Tensor<R>, NetError> {
        let mut trace = self.forward_trace(params, input)?;
        Ok(trace.outputs.pop().expect("non-empty network"))
    }

    /// Runs the network in 32-bit and returns the likelihood volume.
    pub fn predict(&self, params: &Params<f32>, input: &Volume3) -> Result<Volume3, NetError> {
        let out = self.forward(&params.values, &Tensor::<f32>::from_volume(input))?;
        Ok(out.to_volume())
    }

    /// Back-propagates `upstream` (the gradient of a scalar with respect to
    /// the network output) through a recorded forward pass.
    pub fn backward<R: Real>(
        &self,
        params: &[R],
        input: &Tensor<R>,
        trace: &Trace<R>,
        upstream: &Tensor<R>,
        need_input_grad: bool,
    ) -> Result<Gradients<R>, NetError> {
        self.check_params(params)?;
        let out = trace.output();
        if upstream.shape != out.shape || upstream.channels != out.channels {
            return Err(NetError::Shape(format!(
                "upstream gradient {:?}x{} does not match output {:?}x{}",
                upstream.shape, upstream.channels, out.shape, out.channels
            )));
        }
        let n = self.arch.layers.len();
        let mut grad_params = vec![R::ZERO; self.param_count()];
        let mut grads: Vec<Option<Tensor<R>>> = vec![None; n];
        grads[n - 1] = Some(upstream.clone());
        let mut input_grad = None;

        for i in (0..n).rev() {
            let l = &self.arch.layers[i];
            let Some(g) = grads[i].take() else {
                continue;
            };
            let x = if i == 0 { input } else { &trace.outputs[i - 1] };
            let want_dx = i > 0 || need_input_grad;
            let p = self.layer_params(i, params);
            let range = self.layer_range(i);
            let (pgrad, dx): (Vec<R>, Option<Tensor<R>>) = match l.kind {
                LayerKind::Conv3d | LayerKind::Down2 => {
                    let geom = if l.kind == LayerKind::Conv3d {
                        ConvGeom::same(l.kernel)
                    } else {
                        ConvGeom::down2()
                    };
                    let (dw, db, dx) =
                        layers::conv_backward(x, p.weights, l.out_channels, &geom, &g, want_dx);
                    ([dw, db].concat(), dx)
                }
                LayerKind::Up2 => {
                    let (dw, db, dx) =
                        layers::up2_backward(x, p.weights, l.out_channels, &g, want_dx);
                    ([dw, db].concat(), dx)
                }
                LayerKind::Activation => {
                    let (ds, dx) = layers::prelu_backward(x, p.weights, &g);
                    (ds, Some(dx))
                }
                LayerKind::Sigmoid => (
                    Vec::new(),
                    Some(layers::sigmoid_backward(&trace.outputs[i], &g)),
                ),
                LayerKind::SkipAdd => {
                    let from = l.skip_from.expect("validated");
                    accumulate(&mut grads[from], &g);
                    (Vec::new(), Some(g))
                }
            };
            grad_params[range].copy_from_slice(&pgrad);
            if let Some(dx) = dx {
                if i == 0 {
                    if need_input_grad {
                        input_grad = Some(dx);
                    }
                } else {
                    accumulate(&mut grads[i - 1], &dx);
                }
            }
        }
        Ok(Gradients {
            params: grad_params,
            input: input_grad,
        })
    }
}

fn accumulate<R: Real>(slot: &mut Option<Tensor<R>>, g: &Tensor<R>) {
    match slot {
        Some(t) => t.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}
