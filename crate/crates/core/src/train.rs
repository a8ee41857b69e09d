//! Likelihood-map regression: masked MSE loss, optimizers and the epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSequence;
use crate::net::{NetError, Network, Params, Real, Tensor};
use crate::types::{Shape3, Volume3};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("checkpoint callback failed: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Squared error averaged over the observed voxels of each candidate.
    #[default]
    PerVoxelMean,
    /// Plain squared L2 norm per candidate.
    PaperSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_interval: usize,
    pub loss_mode: LossMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            optimizer: Optimizer::ADAM,
            batch_size: 4,
            epochs: 100,
            seed: 0,
            checkpoint_interval: 0,
            loss_mode: LossMode::PerVoxelMean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        // lr = 0 is accepted so that a frozen run can be used as a baseline.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(TrainError::InvalidConfig(
                    "adam needs beta1, beta2 in [0, 1) and eps > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Masked squared error between `output` and `target`.
///
/// Slices flagged in `pad_mask` contribute neither loss nor gradient.
/// Returns the loss and its gradient with respect to `output`.
pub fn mse_loss(
    output: &Volume3,
    target: &Volume3,
    pad_mask: &[bool],
    mode: LossMode,
) -> Result<(f64, Volume3), TrainError> {
    if output.shape() != target.shape() {
        return Err(TrainError::ShapeMismatch(format!(
            "output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let (loss, grad) = masked_mse(output.data(), target.data(), output.shape(), pad_mask, mode)?;
    Ok((loss, Volume3::from_vec(output.shape(), grad).expect("finite gradient")))
}

fn masked_mse<R: Real>(
    output: &[R],
    target: &[f64],
    shape: Shape3,
    pad_mask: &[bool],
    mode: LossMode,
) -> Result<(f64, Vec<R>), TrainError> {
    if pad_mask.len() != shape.depth {
        return Err(TrainError::ShapeMismatch(format!(
            "pad mask has {} slices, volume has {}",
            pad_mask.len(),
            shape.depth
        )));
    }
    let slice = shape.slice_len();
    let valid = pad_mask.iter().filter(|p| !**p).count() * slice;
    let norm = match mode {
        LossMode::PerVoxelMean => valid as f64,
        LossMode::PaperSum => 1.0,
    };
    let mut grad = vec![R::ZERO; output.len()];
    if valid == 0 {
        return Ok((0.0, grad));
    }
    let mut sum = 0.0;
    for (t, &padded) in pad_mask.iter().enumerate() {
        if padded {
            continue;
        }
        let r = t * slice..(t + 1) * slice;
        for ((g, &o), &l) in grad[r.clone()].iter_mut().zip(&output[r.clone()]).zip(&target[r]) {
            let d = o.to_f64() - l;
            sum += d * d;
            *g = R::from_f64(2.0 * d / norm);
        }
    }
    Ok((sum / norm, grad))
}

/// Optimizer moments and step count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Applies one update to `params` in place.
pub fn step(params: &mut [f32], grads: &[f32], cfg: &TrainConfig, state: &mut OptimizerState) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    state.step += 1;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p = (*p as f64 - cfg.lr * g as f64) as f32;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            if state.m.len() != params.len() {
                state.m = vec![0.0; params.len()];
                state.v = vec![0.0; params.len()];
            }
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for ((p, &g), (m, v)) in params
                .iter_mut()
                .zip(grads)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                let g = g as f64;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = (*p as f64 - cfg.lr * m_hat / (v_hat.sqrt() + eps)) as f32;
            }
        }
    }
}

const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// One candidate with its likelihood target.
pub type TrainingPair = (CandidateSequence, Volume3);

/// Stateful epoch runner; [`train`] drives it for a fixed number of epochs.
pub struct Trainer<'a> {
    net: &'a Network,
    cfg: TrainConfig,
    params: Params<f32>,
    state: OptimizerState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(net: &'a Network, cfg: TrainConfig, params: Params<f32>) -> Result<Self, TrainError> {
        cfg.validate()?;
        if params.len() != net.param_count() {
            return Err(TrainError::ShapeMismatch(format!(
                "network needs {} parameters, got {}",
                net.param_count(),
                params.len()
            )));
        }
        // Shuffling draws from its own stream so it does not depend on init.
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
        Ok(Self {
            net,
            cfg,
            params,
            state: OptimizerState::default(),
            rng,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }

    pub fn into_params(self) -> Params<f32> {
        self.params
    }

    pub fn steps(&self) -> u64 {
        self.state.step
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Loss and parameter gradient for one pair.
    fn sample_gradient(&self, pair: &TrainingPair) -> Result<(f64, Vec<f32>), TrainError> {
        let (cand, target) = pair;
        let input = Tensor::<f32>::from_volume(&cand.volume);
        let trace = self.net.forward_trace(&self.params.values, &input)?;
        let out = trace.output();
        if out.shape != target.shape() {
            return Err(TrainError::ShapeMismatch(format!(
                "target {:?} vs output {:?}",
                target.shape(),
                out.shape
            )));
        }
        let (loss, grad) = masked_mse(
            &out.data,
            target.data(),
            out.shape,
            &cand.meta.pad_mask,
            self.cfg.loss_mode,
        )?;
        let upstream = Tensor {
            channels: 1,
            shape: out.shape,
            data: grad,
        };
        let g = self
            .net
            .backward(&self.params.values, &input, &trace, &upstream, false)?;
        Ok((loss, g.params))
    }

    /// Runs one shuffled pass over `data`; returns the mean per-candidate loss.
    pub fn run_epoch(&mut self, data: &[TrainingPair]) -> Result<f64, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            // Samples run in parallel; gradients are summed in batch order.
            let results: Vec<Result<(f64, Vec<f32>), TrainError>> = batch
                .par_iter()
                .map(|&i| self.sample_gradient(&data[i]))
                .collect();
            let mut grad = vec![0.0f64; self.params.len()];
            for r in results {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch: self.epoch,
                        loss,
                    });
                }
                total += loss;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += *v as f64;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let grad: Vec<f32> = grad.iter().map(|g| (g * scale) as f32).collect();
            step(&mut self.params.values, &grad, &self.cfg, &mut self.state);
        }
        self.epoch += 1;
        let mean = total / data.len() as f64;
        if !mean.is_finite() || !self.params.is_finite() {
            return Err(TrainError::Diverged {
                epoch: self.epoch,
                loss: mean,
            });
        }
        Ok(mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Params<f32>,
    /// Mean loss of each epoch, in order.
    pub loss_curve: Vec<f64>,
    pub steps: u64,
}

/// Trains for `cfg.epochs` epochs from `init`.
///
/// `on_checkpoint(epoch, steps, params)` fires every `checkpoint_interval`
/// epochs.
pub fn train(
    net: &Network,
    data: &[TrainingPair],
    cfg: &TrainConfig,
    init: Params<f32>,
    mut on_checkpoint: impl FnMut(usize, u64, &Params<f32>) -> Result<(), String>,
) -> Result<TrainOutcome, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trainer = Trainer::new(net, cfg.clone(), init)?;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let loss = trainer.run_epoch(data)?;
        log::info!("epoch {epoch}/{}: loss {loss:.6e}", cfg.epochs);
        loss_curve.push(loss);
        if cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0 {
            on_checkpoint(epoch, trainer.steps(), trainer.params()).map_err(TrainError::Checkpoint)?;
        }
    }
    Ok(TrainOutcome {
        steps: trainer.steps(),
        params: trainer.into_params(),
        loss_curve,
    })
}
