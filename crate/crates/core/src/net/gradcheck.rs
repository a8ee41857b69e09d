//! Central finite-difference check of [`Network::backward`] in 64-bit.
//!
//! The probed scalar is `sum_i r_i * out_i` with fixed random weights `r`,
//! so the upstream gradient is `r` itself.
//!
//! Each quotient is Richardson-extrapolated from steps `eps` and `eps / 2`,
//! which cancels the O(eps^2) truncation term. Without it, parameters whose
//! gradient is small (~1e-5) show relative errors above 1e-5 at `eps = 1e-3`
//! purely from truncation, and shrinking `eps` instead trades that for
//! rounding error.
//!
//! PReLU is not differentiable at 0. When a perturbation flips the sign of
//! any activation input, the difference quotient straddles a kink and says
//! nothing about the derivative, so the step is halved until no activation
//! changes side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{LayerKind, NetError, Network, Tensor, Trace};
use crate::types::Shape3;

/// Denominator floor for the relative error, so that parameters whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Serialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub kind: LayerKind,
    pub params: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub layers: Vec<LayerCheck>,
    /// Worst relative error over sampled input voxels.
    pub input_max_rel_error: f64,
    /// Perturbations whose step had to shrink to avoid a PReLU kink.
    pub kink_retries: usize,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.max_rel_error)
            .fold(self.input_max_rel_error, f64::max)
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

struct Probe<'a> {
    net: &'a Network,
    weights: Vec<f64>,
}

impl Probe<'_> {
    fn eval(&self, params: &[f64], input: &Tensor<f64>) -> Result<(f64, Vec<bool>), NetError> {
        let trace = self.net.forward_trace(params, input)?;
        let value = trace
            .output()
            .data
            .iter()
            .zip(&self.weights)
            .map(|(o, r)| o * r)
            .sum();
        Ok((value, self.kink_pattern(&trace, input)))
    }

    fn kink_pattern(&self, trace: &Trace<f64>, input: &Tensor<f64>) -> Vec<bool> {
        let mut out = Vec::new();
        for (i, l) in self.net.arch().layers.iter().enumerate() {
            if l.kind == LayerKind::Activation {
                let x = if i == 0 { input } else { &trace.outputs[i - 1] };
                out.extend(x.data.iter().map(|v| *v <= 0.0));
            }
        }
        out
    }

    /// Extrapolated difference quotient along one coordinate, shrinking `eps`
    /// past kinks.
    fn quotient(
        &self,
        base_pattern: &[bool],
        mut eps: f64,
        mut at: impl FnMut(f64) -> Result<(f64, Vec<bool>), NetError>,
        retries: &mut usize,
    ) -> Result<f64, NetError> {
        for attempt in 0..=MAX_HALVINGS {
            let mut smooth = true;
            let mut central = |h: f64| -> Result<f64, NetError> {
                let (plus, kp) = at(h)?;
                let (minus, km) = at(-h)?;
                smooth &= kp == base_pattern && km == base_pattern;
                Ok((plus - minus) / (2.0 * h))
            };
            let coarse = central(eps)?;
            let fine = central(eps / 2.0)?;
            if smooth || attempt == MAX_HALVINGS {
                return Ok((4.0 * fine - coarse) / 3.0);
            }
            *retries += 1;
            eps *= 0.5;
        }
        unreachable!()
    }
}

/// Single-channel input with voxels uniform in [0, 1).
pub fn random_input(shape: Shape3, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Tensor::zeros(1, shape);
    x.data.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
    x
}

/// Compares every parameter gradient (and up to `input_samples` input
/// voxels) against central differences with step `eps`.
pub fn check_network(
    net: &Network,
    params: &[f64],
    input: &Tensor<f64>,
    eps: f64,
    input_samples: usize,
    seed: u64,
) -> Result<GradcheckReport, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = net.forward_trace(params, input)?;
    let out = base.output();
    let weights: Vec<f64> = (0..out.data.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let upstream = Tensor {
        channels: out.channels,
        shape: out.shape,
        data: weights.clone(),
    };
    let analytic = net.backward(params, input, &base, &upstream, true)?;
    let probe = Probe { net, weights };
    let base_pattern = probe.kink_pattern(&base, input);
    let mut retries = 0;

    let mut layers = Vec::new();
    let mut scratch = params.to_vec();
    for (i, l) in net.arch().layers.iter().enumerate() {
        let range = net.layer_range(i);
        let mut check = LayerCheck {
            layer: i,
            kind: l.kind,
            params: range.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for j in range {
            let numeric = probe.quotient(
                &base_pattern,
                eps,
                |d| {
                    scratch[j] = params[j] + d;
                    let r = probe.eval(&scratch, input);
                    scratch[j] = params[j];
                    r
                },
                &mut retries,
            )?;
            let a = analytic.params[j];
            check.max_rel_error = check.max_rel_error.max(rel_error(a, numeric));
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
        }
        layers.push(check);
    }

    let input_grad = analytic.input.expect("requested input gradient");
    let mut x = input.clone();
    let mut input_max_rel_error: f64 = 0.0;
    let n = input.data.len();
    let picks: Vec<usize> = if input_samples >= n {
        (0..n).collect()
    } else {
        (0..input_samples).map(|_| rng.random_range(0..n)).collect()
    };
    for k in picks {
        let numeric = probe.quotient(
            &base_pattern,
            eps,
            |d| {
                x.data[k] = input.data[k] + d;
                let r = probe.eval(params, &x);
                x.data[k] = input.data[k];
                r
            },
            &mut retries,
        )?;
        input_max_rel_error = input_max_rel_error.max(rel_error(input_grad.data[k], numeric));
    }

    Ok(GradcheckReport {
        layers,
        input_max_rel_error,
        kink_retries: retries,
    })
}
