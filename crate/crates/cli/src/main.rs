use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mitodet::candidates::{self, ExtractConfig};
use mitodet::detect::{self, DetectConfig, Radius3};
use mitodet::eval::{self, SpatialMetric, SweepAxis, Tolerance};
use mitodet::io::{self, BitDepth, Checkpoint};
use mitodet::net::{gradcheck, NetConfig, Network};
use mitodet::pipeline::{self, PipelineError, EXIT_RUNTIME, EXIT_VALIDATION};
use mitodet::synth::{self, SynthConfig};
use mitodet::targets::{self, SigmaParams};
use mitodet::train::{self, LossMode, Optimizer, TrainConfig};
use mitodet::types::Shape3;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ntarget: ",
    env!("MITODET_TARGET"),
    "\nprofile: ",
    env!("MITODET_PROFILE"),
);

#[derive(Parser)]
#[command(name = "mitodet", version, long_version = LONG_VERSION)]
#[command(about = "Spatio-temporal mitosis detection with likelihood-map regression")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Cut candidate sub-volumes out of a sequence.
    Extract(ExtractArgs),
    /// Build likelihood targets for extracted candidates.
    Targets(TargetsArgs),
    /// Train the network on candidates and targets.
    Train(TrainArgs),
    /// Detect events in a sequence with a trained checkpoint.
    Detect(DetectArgs),
    /// Score detections against annotations.
    Eval(EvalArgs),
    /// Score detections over a range of tolerances.
    Sweep(SweepArgs),
    /// Compare backward gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Run every stage from a JSON config.
    Pipeline(PipelineArgs),
}

/// A failure caused by the user's input rather than by a running stage.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    events: usize,
    #[arg(long, default_value_t = 6)]
    distractors: usize,
    /// Events placed next to another event so both share a candidate.
    #[arg(long, default_value_t = 3)]
    close_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 48)]
    frames: usize,
    /// Frame size as WxH.
    #[arg(long, default_value = "512x512", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long)]
    sixteen_bit: bool,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    Ok((
        w.parse().map_err(|e| format!("width: {e}"))?,
        h.parse().map_err(|e| format!("height: {e}"))?,
    ))
}

fn parse_radius(s: &str) -> Result<Radius3, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{p}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, t] => Ok(Radius3::new(x, y, t)),
        _ => Err("expected X,Y,T".into()),
    }
}

#[derive(Args, Clone)]
struct ExtractFlags {
    #[arg(long, default_value_t = ExtractConfig::default().d)]
    d: usize,
    #[arg(long, default_value_t = ExtractConfig::default().theta_bin)]
    theta_bin: f64,
    #[arg(long, default_value_t = ExtractConfig::default().min_area)]
    min_area: usize,
    #[arg(long, default_value_t = ExtractConfig::default().tau_link)]
    tau_link: f64,
}

impl ExtractFlags {
    fn config(&self) -> Result<ExtractConfig> {
        let cfg = ExtractConfig {
            d: self.d,
            theta_bin: self.theta_bin,
            min_area: self.min_area,
            tau_link: self.tau_link,
            ..ExtractConfig::default()
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: ExtractFlags,
}

#[derive(Args)]
struct TargetsArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    sigma_x: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    sigma_y: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    sigma_t: f64,
    /// Index of the first pixel/frame in the annotation file.
    #[arg(long, default_value_t = 0)]
    index_base: i64,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossModeArg {
    PerVoxelMean,
    PaperSum,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    /// Checkpoint file; `loss_curve.csv` is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value = "per-voxel-mean")]
    loss_mode: LossModeArg,
    /// Save `epoch_%05d.ckpt` next to the output every N epochs.
    #[arg(long, default_value_t = 0)]
    checkpoint_interval: usize,
    /// Continue from this checkpoint instead of a fresh initialisation.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = NetConfig::default().depth)]
    depth: usize,
    #[arg(long, default_value_t = NetConfig::default().base_channels)]
    base_channels: usize,
    #[arg(long, default_value_t = NetConfig::default().max_channels)]
    max_channels: usize,
    /// Initial output level of a fresh network, in (0, 1).
    #[arg(long, default_value_t = 0.01)]
    head_prior: f64,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DetectConfig::default().theta_peak)]
    theta_peak: f64,
    /// Local-maximum neighbourhood as X,Y,T.
    #[arg(long, default_value = "5,5,2", value_parser = parse_radius)]
    peak_radius: Radius3,
    /// Duplicate suppression radius as X,Y,T.
    #[arg(long, default_value = "7,7,3", value_parser = parse_radius)]
    merge_radius: Radius3,
    #[command(flatten)]
    extract: ExtractFlags,
}

#[derive(Args, Clone)]
struct ToleranceFlags {
    #[arg(long, default_value_t = 6.0)]
    tau_t: f64,
    #[arg(long, default_value_t = 15.0)]
    tau_s: f64,
    /// Use max(|dx|, |dy|) instead of Euclidean spatial distance.
    #[arg(long)]
    chebyshev: bool,
}

impl ToleranceFlags {
    fn tolerance(&self) -> Result<Tolerance> {
        if !(self.tau_t >= 0.0 && self.tau_s >= 0.0) {
            return Err(invalid("tolerances must be >= 0"));
        }
        Ok(Tolerance {
            tau_t: self.tau_t,
            tau_s: self.tau_s,
            metric: if self.chebyshev {
                SpatialMetric::Chebyshev
            } else {
                SpatialMetric::Euclidean
            },
        })
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tol: ToleranceFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gts: PathBuf,
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8")]
    values: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a line chart here.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    tol: ToleranceFlags,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Edge length of the cubic random input.
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input voxels to probe.
    #[arg(long, default_value_t = 64)]
    input_samples: usize,
    /// Exit with status 3 when any error exceeds this.
    #[arg(long, default_value_t = 1e-5)]
    max_rel: f64,
    #[arg(long, default_value_t = NetConfig::default().depth)]
    depth: usize,
    #[arg(long, default_value_t = NetConfig::default().base_channels)]
    base_channels: usize,
    #[arg(long, default_value_t = NetConfig::default().max_channels)]
    max_channels: usize,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON config; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    force: bool,
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        width: a.size.0,
        height: a.size.1,
        frames: a.frames,
        n_events: a.events,
        n_close_pairs: a.close_pairs.min(a.events / 2),
        n_distractors: a.distractors,
        seed: a.seed,
        ..SynthConfig::default()
    };
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    let (seq, anns) = synth::generate(&cfg)?;
    let depth = if a.sixteen_bit {
        BitDepth::Sixteen
    } else {
        BitDepth::Eight
    };
    io::save_sequence(&seq, &a.out, depth)?;
    io::write_annotations(&anns, &a.out.join("annotations.csv"))?;
    println!("{} frames, {} events -> {}", seq.len(), anns.len(), a.out.display());
    Ok(())
}

fn run_extract(a: &ExtractArgs) -> Result<()> {
    let cfg = a.flags.config()?;
    let seq = io::load_sequence(&a.input)?;
    let cands = candidates::extract(&seq, &cfg)?;
    io::save_candidates(&cands, &a.out)?;
    println!("{} candidates -> {}", cands.len(), a.out.display());
    Ok(())
}

fn run_targets(a: &TargetsArgs) -> Result<()> {
    let sigma = SigmaParams {
        sigma_x: a.sigma_x,
        sigma_y: a.sigma_y,
        sigma_t: a.sigma_t,
    };
    sigma.validate().map_err(|e| invalid(e.to_string()))?;
    let cands = io::load_candidates(&a.candidates)?;
    let anns = io::read_annotations_with_base(&a.annotations, a.index_base)?;
    let maps = cands
        .iter()
        .map(|c| targets::build_targets(c, &anns.rows, &sigma))
        .collect::<Result<Vec<_>, _>>()?;
    io::save_targets(&maps, &a.out)?;
    let positive = maps.iter().filter(|m| m.max_value() > 0.0).count();
    println!("{} targets ({positive} non-zero) -> {}", maps.len(), a.out.display());
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        lr: a.lr,
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::ADAM,
        },
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        checkpoint_interval: a.checkpoint_interval,
        loss_mode: match a.loss_mode {
            LossModeArg::PerVoxelMean => LossMode::PerVoxelMean,
            LossModeArg::PaperSum => LossMode::PaperSum,
        },
    };
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    let cands = io::load_candidates(&a.candidates)?;
    let tgts = io::load_targets(&a.targets)?;
    if cands.len() != tgts.len() {
        return Err(invalid(format!(
            "{} candidates but {} targets",
            cands.len(),
            tgts.len()
        )));
    }
    let (net, init) = match &a.resume {
        Some(p) => {
            let ck = io::load_checkpoint(p)?;
            (Network::new(ck.arch)?, ck.params)
        }
        None => {
            let net = Network::from_config(&NetConfig {
                depth: a.depth,
                base_channels: a.base_channels,
                max_channels: a.max_channels,
            })
            .map_err(|e| invalid(e.to_string()))?;
            let mut init = net.init_params(a.seed);
            net.set_head_prior(&mut init, a.head_prior)
                .map_err(|e| invalid(e.to_string()))?;
            (net, init)
        }
    };
    let pairs: Vec<_> = cands.into_iter().zip(tgts).collect();
    let out_dir = a.out.parent().unwrap_or(Path::new(".")).to_path_buf();
    std::fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
    let ck = |params: &mitodet::net::Params, step| Checkpoint {
        arch: net.arch().clone(),
        params: params.clone(),
        step,
        seed: a.seed,
    };
    let outcome = train::train(&net, &pairs, &cfg, init, |epoch, step, params| {
        io::save_checkpoint(&ck(params, step), &out_dir.join(format!("epoch_{epoch:05}.ckpt")))
            .map_err(|e| e.to_string())
    })?;
    io::save_checkpoint(&ck(&outcome.params, outcome.steps), &a.out)?;
    io::write_loss_curve(&outcome.loss_curve, &out_dir.join("loss_curve.csv"))?;
    if let Some(last) = outcome.loss_curve.last() {
        println!("final loss {last:.6e} after {} steps -> {}", outcome.steps, a.out.display());
    }
    Ok(())
}

fn run_detect(a: &DetectArgs) -> Result<()> {
    let cfg = DetectConfig {
        theta_peak: a.theta_peak,
        peak_radius: a.peak_radius,
        merge_radius: a.merge_radius,
    };
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    let ex = a.extract.config()?;
    let seq = io::load_sequence(&a.input)?;
    let ck = io::load_checkpoint(&a.ckpt)?;
    let net = Network::new(ck.arch)?;
    let dets = detect::detect(&seq, &net, &ck.params, &ex, &cfg)?;
    io::write_detections(&dets, &a.out)?;
    println!("{} detections -> {}", dets.len(), a.out.display());
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let tol = a.tol.tolerance()?;
    let dets = io::read_detections(&a.dets)?;
    let gts = io::read_annotations(&a.gts)?;
    let m = eval::evaluate(&dets, &gts.rows, &tol);
    io::write_metrics(&m, &a.out)?;
    println!(
        "tp {} fp {} fn {}  precision {:.3} recall {:.3} f1 {:.3}",
        m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
    );
    Ok(())
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let tol = a.tol.tolerance()?;
    if a.values.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("sweep values must be >= 0"));
    }
    let dets = io::read_detections(&a.dets)?;
    let gts = io::read_annotations(&a.gts)?;
    let rows = eval::sweep(&dets, &gts.rows, a.axis, &a.values, &tol);
    io::write_sweep(&rows, &a.out)?;
    if let Some(svg) = &a.svg {
        std::fs::write(svg, io::sweep_to_svg(&rows)).with_context(|| svg.display().to_string())?;
    }
    print!("{}", io::sweep_to_csv(&rows));
    Ok(())
}

fn run_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let net = Network::from_config(&NetConfig {
        depth: a.depth,
        base_channels: a.base_channels,
        max_channels: a.max_channels,
    })
    .map_err(|e| invalid(e.to_string()))?;
    let shape = Shape3::new(a.size, a.size, a.size);
    net.check_input(shape).map_err(|e| invalid(e.to_string()))?;
    let params = net.init_params(a.seed).cast::<f64>();
    let input = gradcheck::random_input(shape, a.seed.wrapping_add(1));
    let report = gradcheck::check_network(&net, &params.values, &input, a.eps, a.input_samples, a.seed)?;
    println!("layer  kind       params  max_rel_error  max_abs_error");
    for l in &report.layers {
        println!(
            "{:>5}  {:<9} {:>7}  {:>13.3e}  {:>13.3e}",
            l.layer,
            l.kind.name(),
            l.params,
            l.max_rel_error,
            l.max_abs_error
        );
    }
    println!("input  max_rel_error {:.3e}", report.input_max_rel_error);
    let worst = report.max_rel_error();
    println!("overall max_rel_error {worst:.3e} (limit {:.1e})", a.max_rel);
    if worst >= a.max_rel {
        bail!("gradient check failed: {worst:.3e} >= {:.1e}", a.max_rel);
    }
    Ok(())
}

fn run_pipeline(a: &PipelineArgs) -> Result<(), PipelineError> {
    let summary = match &a.config {
        Some(path) => pipeline::run_file(path, &a.out, a.force)?,
        None => pipeline::run(&pipeline::PipelineConfig::default(), &a.out, a.force)?,
    };
    let m = &summary.metrics;
    println!(
        "tp {} fp {} fn {}  precision {:.3} recall {:.3} f1 {:.3} -> {}",
        m.tp,
        m.fp,
        m.fn_,
        m.precision,
        m.recall,
        m.f1,
        summary.out_dir.display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Extract(a) => run_extract(a),
        Command::Targets(a) => run_targets(a),
        Command::Train(a) => run_train(a),
        Command::Detect(a) => run_detect(a),
        Command::Eval(a) => run_eval(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Pipeline(a) => run_pipeline(a).map_err(Into::into),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(p) = err.downcast_ref::<PipelineError>() {
        return p.exit_code() as u8;
    }
    if err.downcast_ref::<Invalid>().is_some() {
        return EXIT_VALIDATION as u8;
    }
    EXIT_RUNTIME as u8
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME as u8);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
