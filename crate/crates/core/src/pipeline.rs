//! The whole run: data, extraction, targets, training, detection, scoring.
//!
//! A run is driven by one JSON document with a section per stage; missing
//! keys take stage defaults, and the fully resolved document is written to
//! the run directory. The empty document `{}` trains on three synthetic
//! sequences and evaluates on a fourth one generated with another seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::candidates::{self, CandidateError, CandidateSequence, ExtractConfig};
use crate::detect::{self, DetectConfig};
use crate::eval::{self, Metrics, SpatialMetric, SweepAxis, Tolerance};
use crate::io::{self, BitDepth, Checkpoint, IoError};
use crate::net::{NetConfig, NetError, Network, Params};
use crate::synth::{self, SynthConfig};
use crate::targets::{self, SigmaParams, TargetError};
use crate::train::{self, TrainConfig, TrainingPair};
use crate::types::{Annotation, ImageSequence};

/// Process exit status for a configuration or usage problem.
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit status for a failure while running a stage.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. } | PipelineError::Usage(_) => EXIT_VALIDATION,
            PipelineError::Stage { .. } => EXIT_RUNTIME,
        }
    }

    fn config(key: impl Into<String>, message: impl ToString) -> Self {
        PipelineError::Config {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

fn stage<E: std::error::Error + Send + Sync + 'static>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        source: Box::new(e),
    }
}

/// A sequence on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSource {
    pub frames: PathBuf,
    pub annotations: PathBuf,
    /// Subtracted from every annotation coordinate on load.
    #[serde(default)]
    pub index_base: i64,
}

/// Where the training and evaluation sequences come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Generated sequences differing only in seed.
    Synth {
        #[serde(default)]
        config: SynthConfig,
        #[serde(default = "default_train_seeds")]
        train_seeds: Vec<u64>,
        #[serde(default = "default_test_seed")]
        test_seed: u64,
    },
    Files {
        train: Vec<SequenceSource>,
        test: SequenceSource,
    },
}

fn default_train_seeds() -> Vec<u64> {
    vec![0, 2, 3]
}

fn default_test_seed() -> u64 {
    1
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synth {
            config: SynthConfig::default(),
            train_seeds: default_train_seeds(),
            test_seed: default_test_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tau_t: f64,
    pub tau_s: f64,
    pub metric: SpatialMetric,
    pub sweep_temporal: Vec<f64>,
    pub sweep_spatial: Vec<f64>,
    /// Also draw each sweep as an SVG chart.
    pub svg: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        let tol = Tolerance::default();
        Self {
            tau_t: tol.tau_t,
            tau_s: tol.tau_s,
            metric: tol.metric,
            sweep_temporal: vec![0.0, 1.0, 2.0, 4.0, 6.0, 8.0],
            sweep_spatial: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            svg: false,
        }
    }
}

impl EvalSection {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            tau_t: self.tau_t,
            tau_s: self.tau_s,
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Persist candidate and target volumes (large).
    pub save_volumes: bool,
    /// Bit depth of written synthetic frames.
    pub sixteen_bit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub extract: ExtractConfig,
    pub targets: SigmaParams,
    pub net: NetConfig,
    /// Seed of the parameter initialisation.
    pub init_seed: u64,
    /// Initial output level of the network; see [`Network::set_head_prior`].
    pub head_prior: f64,
    pub train: TrainConfig,
    pub detect: DetectConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            extract: ExtractConfig::default(),
            targets: SigmaParams::default(),
            net: NetConfig::default(),
            init_seed: 0,
            head_prior: 0.01,
            train: TrainConfig {
                lr: 1e-3,
                batch_size: 1,
                epochs: 40,
                ..TrainConfig::default()
            },
            // The trained net answers about 0.85 at events; weaker responses
            // are mostly objects cut off at a window edge.
            detect: DetectConfig {
                theta_peak: 0.5,
                ..DetectConfig::default()
            },
            eval: EvalSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a config document. Type errors and unknown keys are reported
    /// with the JSON path of the offending key.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| PipelineError::config("<root>", e))?;
        let root = value
            .as_object()
            .ok_or_else(|| PipelineError::config("<root>", "expected a JSON object"))?;
        // Parse each section on its own so errors can name it.
        let mut cfg = PipelineConfig::default();
        for (key, v) in root {
            let v = v.clone();
            let err = |e: serde_json::Error| PipelineError::config(key.as_str(), e);
            match key.as_str() {
                "data" => cfg.data = serde_json::from_value(v).map_err(err)?,
                "extract" => cfg.extract = serde_json::from_value(v).map_err(err)?,
                "targets" => cfg.targets = serde_json::from_value(v).map_err(err)?,
                "net" => cfg.net = serde_json::from_value(v).map_err(err)?,
                "init_seed" => cfg.init_seed = serde_json::from_value(v).map_err(err)?,
                "head_prior" => cfg.head_prior = serde_json::from_value(v).map_err(err)?,
                // Keys left out of these two keep the pipeline's presets.
                "train" => {
                    let mut base = serde_json::to_value(&cfg.train).expect("serializable");
                    merge(&mut base, v);
                    cfg.train = serde_json::from_value(base).map_err(err)?;
                }
                "detect" => {
                    let mut base = serde_json::to_value(&cfg.detect).expect("serializable");
                    merge(&mut base, v);
                    cfg.detect = serde_json::from_value(base).map_err(err)?;
                }
                "eval" => cfg.eval = serde_json::from_value(v).map_err(err)?,
                "output" => cfg.output = serde_json::from_value(v).map_err(err)?,
                other => return Err(PipelineError::config(other, "unknown section")),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let DataConfig::Synth { config, .. } = &self.data {
            config
                .validate()
                .map_err(|e| PipelineError::config("data.synth.config", e))?;
        }
        let x = &self.extract;
        if x.d == 0 || x.d % 2 == 0 {
            return Err(PipelineError::config("extract.d", "must be odd and positive"));
        }
        if !(x.theta_bin > 0.0 && x.theta_bin < 1.0) {
            return Err(PipelineError::config("extract.theta_bin", "must lie in (0, 1)"));
        }
        x.validate().map_err(|e| PipelineError::config("extract", e))?;
        if let Err(TargetError::BadSigma { axis, value }) = self.targets.validate() {
            return Err(PipelineError::config(
                format!("targets.sigma_{axis}"),
                format!("must be positive, got {value}"),
            ));
        }
        Network::from_config(&self.net).map_err(|e| PipelineError::config("net", e))?;
        let net_step = 1usize << self.net.depth;
        if x.crop_size % net_step != 0 || x.crop_depth % net_step != 0 {
            return Err(PipelineError::config(
                "extract.crop_size",
                format!("crop size and depth must be divisible by {net_step} for net.depth"),
            ));
        }
        if !(self.head_prior > 0.0 && self.head_prior < 1.0) {
            return Err(PipelineError::config("head_prior", "must lie in (0, 1)"));
        }
        let t = &self.train;
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            return Err(PipelineError::config("train.lr", "must be >= 0"));
        }
        if t.batch_size == 0 {
            return Err(PipelineError::config("train.batch_size", "must be >= 1"));
        }
        t.validate().map_err(|e| PipelineError::config("train.optimizer", e))?;
        if !(self.detect.theta_peak > 0.0 && self.detect.theta_peak < 1.0) {
            return Err(PipelineError::config("detect.theta_peak", "must lie in (0, 1)"));
        }
        let tol = self.eval.tolerance();
        if !(tol.tau_t >= 0.0) {
            return Err(PipelineError::config("eval.tau_t", "must be >= 0"));
        }
        if !(tol.tau_s >= 0.0) {
            return Err(PipelineError::config("eval.tau_s", "must be >= 0"));
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                b.insert(k, v);
            }
        }
        (b, p) => *b = p,
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: Metrics,
    pub loss_curve: Vec<f64>,
    pub train_candidates: usize,
    pub test_candidates: usize,
    pub detections: usize,
    pub out_dir: PathBuf,
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<(), PipelineError> {
    if out.exists() {
        let non_empty = fs::read_dir(out)
            .map_err(stage("setup"))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(PipelineError::Usage(format!(
                "output directory {} is not empty (use --force to write into it)",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(stage("setup"))
}

type Labelled = (ImageSequence, Vec<Annotation>);

/// The training sequences and the test sequence.
fn load_or_generate(cfg: &PipelineConfig, out: &Path) -> Result<(Vec<Labelled>, Labelled), PipelineError> {
    match &cfg.data {
        DataConfig::Synth {
            config,
            train_seeds,
            test_seed,
        } => {
            let depth = if cfg.output.sixteen_bit {
                BitDepth::Sixteen
            } else {
                BitDepth::Eight
            };
            let make = |dir: PathBuf, seed: u64| -> Result<Labelled, PipelineError> {
                let sc = SynthConfig {
                    seed,
                    ..config.clone()
                };
                let (seq, anns) = synth::generate(&sc).map_err(stage("synth"))?;
                io::save_sequence(&seq, &dir.join("frames"), depth).map_err(stage("synth"))?;
                io::write_annotations(&anns, &dir.join("annotations.csv")).map_err(stage("synth"))?;
                // Train and evaluate on exactly what was written.
                let seq = io::load_sequence(&dir.join("frames")).map_err(stage("synth"))?;
                Ok((seq, anns))
            };
            let data = out.join("data");
            let train = train_seeds
                .iter()
                .enumerate()
                .map(|(k, &seed)| make(data.join(format!("train_{k}")), seed))
                .collect::<Result<_, _>>()?;
            Ok((train, make(data.join("test"), *test_seed)?))
        }
        DataConfig::Files { train, test } => {
            let load = |s: &SequenceSource| -> Result<Labelled, PipelineError> {
                let seq = io::load_sequence(&s.frames).map_err(stage::<IoError>("load"))?;
                let anns = io::read_annotations_for(&s.annotations, &seq, s.index_base)
                    .map_err(stage("load"))?;
                Ok((seq, anns.rows))
            };
            Ok((train.iter().map(load).collect::<Result<_, _>>()?, load(test)?))
        }
    }
}

/// Runs every stage and writes the artifacts under `out`.
///
/// Artifacts: `resolved_config.json`, `data/` (synthetic input only),
/// `model.ckpt`, `checkpoints/`, `loss_curve.csv`, `detections.csv`,
/// `metrics.json`, `sweep_temporal.csv`, `sweep_spatial.csv`, and with
/// `output.save_volumes` the candidate and target volumes.
pub fn run(cfg: &PipelineConfig, out: &Path, force: bool) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    prepare_out_dir(out, force)?;
    io::write_json(cfg, &out.join("resolved_config.json")).map_err(stage("setup"))?;

    let (train_data, (test_seq, test_anns)) = load_or_generate(cfg, out)?;

    log::info!("extracting candidates");
    let extract = |seq: &ImageSequence| -> Result<Vec<CandidateSequence>, PipelineError> {
        candidates::extract(seq, &cfg.extract).map_err(stage::<CandidateError>("extract"))
    };
    let mut pairs: Vec<TrainingPair> = Vec::new();
    for (seq, anns) in &train_data {
        for c in extract(seq)? {
            let t = targets::build_targets(&c, anns, &cfg.targets).map_err(stage::<TargetError>("targets"))?;
            pairs.push((c, t));
        }
    }
    let test_cands = extract(&test_seq)?;
    log::info!(
        "{} training and {} test candidates",
        pairs.len(),
        test_cands.len()
    );

    if cfg.output.save_volumes {
        let (cands, tgts): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        io::save_candidates(&cands, &out.join("candidates/train")).map_err(stage("extract"))?;
        io::save_targets(&tgts, &out.join("targets/train")).map_err(stage("targets"))?;
        io::save_candidates(&test_cands, &out.join("candidates/test")).map_err(stage("extract"))?;
    }

    let net = Network::from_config(&cfg.net).map_err(stage::<NetError>("train"))?;
    let mut init = net.init_params(cfg.init_seed);
    net.set_head_prior(&mut init, cfg.head_prior)
        .map_err(stage::<NetError>("train"))?;
    let ck_dir = out.join("checkpoints");
    let checkpoint = |params: &Params<f32>, step: u64| Checkpoint {
        arch: net.arch().clone(),
        params: params.clone(),
        step,
        seed: cfg.init_seed,
    };
    log::info!("training on {} candidates", pairs.len());
    let outcome = train::train(&net, &pairs, &cfg.train, init, |epoch, step, params| {
        fs::create_dir_all(&ck_dir).map_err(|e| e.to_string())?;
        io::save_checkpoint(
            &checkpoint(params, step),
            &ck_dir.join(format!("epoch_{epoch:05}.ckpt")),
        )
        .map_err(|e| e.to_string())
    })
    .map_err(stage("train"))?;
    io::save_checkpoint(&checkpoint(&outcome.params, outcome.steps), &out.join("model.ckpt"))
        .map_err(stage("train"))?;
    io::write_loss_curve(&outcome.loss_curve, &out.join("loss_curve.csv")).map_err(stage("train"))?;

    log::info!("detecting");
    let dets = detect::detect_in_candidates(&test_cands, &test_seq, &net, &outcome.params, &cfg.detect)
        .map_err(stage("detect"))?;
    io::write_detections(&dets, &out.join("detections.csv")).map_err(stage("detect"))?;

    let metrics = eval::evaluate(&dets, &test_anns, &cfg.eval.tolerance());
    io::write_metrics(&metrics, &out.join("metrics.json")).map_err(stage("eval"))?;
    for (axis, values) in [
        (SweepAxis::Temporal, &cfg.eval.sweep_temporal),
        (SweepAxis::Spatial, &cfg.eval.sweep_spatial),
    ] {
        if values.is_empty() {
            continue;
        }
        let rows = eval::sweep(&dets, &test_anns, axis, values, &cfg.eval.tolerance());
        let stem = format!("sweep_{}", axis.name());
        io::write_sweep(&rows, &out.join(format!("{stem}.csv"))).map_err(stage("eval"))?;
        if cfg.eval.svg {
            fs::write(out.join(format!("{stem}.svg")), io::sweep_to_svg(&rows))
                .map_err(stage("eval"))?;
        }
    }
    log::info!(
        "precision {:.3} recall {:.3} f1 {:.3}",
        metrics.precision,
        metrics.recall,
        metrics.f1
    );

    Ok(RunSummary {
        metrics,
        loss_curve: outcome.loss_curve,
        train_candidates: pairs.len(),
        test_candidates: test_cands.len(),
        detections: dets.len(),
        out_dir: out.to_path_buf(),
    })
}

/// Reads a config file and runs it.
pub fn run_file(config: &Path, out: &Path, force: bool) -> Result<RunSummary, PipelineError> {
    let text = fs::read_to_string(config)
        .map_err(|e| PipelineError::Usage(format!("{}: {e}", config.display())))?;
    run(&PipelineConfig::from_json(&text)?, out, force)
}
