//! Acceptance run: every criterion prints one PASS/FAIL line, and the
//! process fails if any criterion does.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mitodet::candidates::{self, average_filter, connected_components, ExtractConfig};
use mitodet::detect::{local_maxima, DetectConfig};
use mitodet::eval::{self, f1_score, match_detections, SweepAxis, Tolerance};
use mitodet::io;
use mitodet::net::gradcheck::{check_network, random_input};
use mitodet::net::{Arch, LayerKind, LayerSpec, NetConfig, Network};
use mitodet::pipeline::{self, PipelineConfig};
use mitodet::synth::{self, SynthConfig};
use mitodet::targets::{aggregate_max, build_targets, single_annotation_map, SigmaParams};
use mitodet::train::{mse_loss, LossMode, TrainConfig, Trainer, TrainingPair};
use mitodet::types::{to_local, Annotation, CropMeta, Frame, Point3, Shape3, Volume3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------------------

/// Precision/recall/F1 triples of the "Huh" and "Ours" rows, for the Control,
/// FGF2, BMP2 and FGF2+BMP2 conditions.
const TABLE: [(&str, f64, f64, f64); 8] = [
    ("Huh Control", 0.699, 0.765, 0.731),
    ("Huh FGF2", 0.347, 0.454, 0.394),
    ("Huh BMP2", 0.840, 0.845, 0.843),
    ("Huh FGF2+BMP2", 0.539, 0.604, 0.569),
    ("Ours Control", 0.857, 0.898, 0.877),
    ("Ours FGF2", 0.646, 0.841, 0.731),
    ("Ours BMP2", 0.864, 0.947, 0.904),
    ("Ours FGF2+BMP2", 0.831, 0.746, 0.786),
];

fn metric_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, p, r, printed) in TABLE {
        let diff = (f1_score(p, r) - printed).abs();
        ensure(diff <= 0.001, format!("{name}: {:.4} vs {printed}", f1_score(p, r)))?;
        worst = worst.max(diff);
    }
    Ok(format!("8 rows, worst |dF1| {worst:.4}"))
}

fn likelihood_exactness() -> Outcome {
    let sigma = SigmaParams {
        sigma_x: 3.0,
        sigma_y: 2.0,
        sigma_t: 1.0,
    };
    let shape = Shape3::new(16, 12, 8);
    let m = single_annotation_map(Point3::new(4.0, 3.0, 2.0), &sigma, shape).map_err(|e| e.to_string())?;
    for ((x, y, t), want) in [
        ((4, 3, 2), 1.0),
        ((7, 3, 2), (-1.0f64).exp()),
        ((7, 5, 3), (-3.0f64).exp()),
    ] {
        let got = m.get(x, y, t);
        ensure((got - want).abs() <= 1e-12, format!("({x},{y},{t}): {got} vs {want}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = Shape3::new(12, 10, 6);
    let random_map = |rng: &mut ChaCha8Rng| {
        let p = Point3::new(
            rng.random_range(-2.0..14.0),
            rng.random_range(-2.0..12.0),
            rng.random_range(-1.0..7.0),
        );
        single_annotation_map(p, &SigmaParams::default(), shape).unwrap()
    };
    let agg = |maps: &[&Volume3]| -> Volume3 {
        let owned: Vec<Volume3> = maps.iter().map(|m| (*m).clone()).collect();
        aggregate_max(&owned).unwrap().unwrap()
    };
    for k in 0..100 {
        let (a, b, c) = (random_map(&mut rng), random_map(&mut rng), random_map(&mut rng));
        ensure(agg(&[&a, &b]) == agg(&[&b, &a]), format!("pair {k}: not commutative"))?;
        ensure(agg(&[&a, &a]) == a, format!("pair {k}: not idempotent"))?;
        let ab_c = agg(&[&agg(&[&a, &b]), &c]);
        let a_bc = agg(&[&a, &agg(&[&b, &c])]);
        ensure(ab_c == a_bc, format!("pair {k}: not associative"))?;
        let ab = agg(&[&a, &b]);
        let bound = ab.data().iter().zip(a.data()).all(|(m, v)| m >= v);
        ensure(bound, format!("pair {k}: not an upper bound"))?;
    }
    Ok("offsets exact, 100 pairs obey the max laws".into())
}

fn gradient_correctness() -> Outcome {
    let shape = Shape3::new(8, 8, 8);
    let single = |layers: Vec<LayerSpec>| Network::new(Arch { layers }).unwrap();
    let nets = [
        ("conv3d", single(vec![LayerSpec::conv(1, 2, 3), LayerSpec::conv(2, 1, 3)])),
        ("down2+up2", single(vec![LayerSpec::down2(1, 3), LayerSpec::up2(3, 1)])),
        (
            "prelu",
            single(vec![LayerSpec::conv(1, 2, 3), LayerSpec::prelu(2), LayerSpec::conv(2, 1, 1)]),
        ),
        ("sigmoid", single(vec![LayerSpec::conv(1, 1, 3), LayerSpec::sigmoid(1)])),
        (
            "skip_add",
            single(vec![
                LayerSpec::conv(1, 1, 3),
                LayerSpec::prelu(1),
                LayerSpec::conv(1, 1, 3),
                LayerSpec::skip_add(1, 1),
            ]),
        ),
        ("default net", Network::from_config(&NetConfig::default()).unwrap()),
    ];
    let mut kinds = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, (name, net)) in nets.iter().enumerate() {
        let mut params = net.init_params(20 + i as u64).cast::<f64>();
        // Non-zero biases so bias gradients are not trivially matched.
        let mut rng = ChaCha8Rng::seed_from_u64(40 + i as u64);
        for l in 0..net.arch().layers.len() {
            let range = net.layer_range(l);
            let spec = &net.arch().layers[l];
            for j in range.end - spec.bias_count()..range.end {
                params.values[j] = rng.random_range(-0.2..0.2);
            }
        }
        let x = random_input(shape, 60 + i as u64);
        let r = check_network(net, &params.values, &x, 1e-3, shape.len(), 80 + i as u64)
            .map_err(|e| e.to_string())?;
        let e = r.max_rel_error();
        ensure(e < 1e-5, format!("{name}: max relative error {e:.2e}"))?;
        worst = worst.max(e);
        kinds.extend(net.arch().layers.iter().map(|l| l.kind));
    }
    for kind in [
        LayerKind::Conv3d,
        LayerKind::Down2,
        LayerKind::Up2,
        LayerKind::Activation,
        LayerKind::Sigmoid,
        LayerKind::SkipAdd,
    ] {
        ensure(kinds.contains(&kind), format!("{} not covered", kind.name()))?;
    }
    Ok(format!("6 nets on 8x8x8, worst relative error {worst:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..50 {
        let mask = common::random_mask(&mut rng, 64, 64, [0.3, 0.5, 0.6][k % 3]);
        let want: Vec<_> = common::flood_components(&mask)
            .iter()
            .map(|c| common::box_of(c))
            .collect();
        let got = connected_components(&mask, 1);
        ensure(got.len() == want.len(), format!("mask {k}: {} vs {} components", got.len(), want.len()))?;
        for (g, w) in got.iter().zip(&want) {
            let same = (g.x_min, g.y_min, g.x_max, g.y_max, g.area) == (w.x_min, w.y_min, w.x_max, w.y_max, w.area);
            ensure(same, format!("mask {k}: component differs"))?;
        }
    }

    let tol = Tolerance::default();
    for k in 0..50 {
        let (dets, gts) = common::random_instance(&mut rng, 8, 50.0);
        let m = match_detections(&dets, &gts, &tol);
        let want = common::brute_force_cardinality(&dets, &gts, &tol);
        ensure(m.tp == want, format!("instance {k}: tp {} vs {want}", m.tp))?;
    }

    let mut worst: f64 = 0.0;
    for (w, h, d) in [(64, 64, 5), (37, 21, 3), (16, 48, 9)] {
        let data = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = Frame::from_vec(w, h, data);
        let got = average_filter(&f, d).map_err(|e| e.to_string())?;
        let want = common::naive_average(&f, d);
        for (a, b) in got.data.iter().zip(&want.data) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, format!("average filter off by {worst:.2e}"))?;
    Ok(format!("50 masks, 50 matchings exact; average filter within {worst:.1e}"))
}

/// Per-voxel MSE over observed slices, averaged over the pairs.
fn mean_mse(net: &Network, params: &mitodet::net::Params<f32>, pairs: &[TrainingPair]) -> f64 {
    pairs
        .iter()
        .map(|(c, t)| {
            let out = net.predict(params, &c.volume).unwrap();
            mse_loss(&out, t, &c.meta.pad_mask, LossMode::PerVoxelMean).unwrap().0
        })
        .sum::<f64>()
        / pairs.len() as f64
}

fn overfit_sanity() -> Outcome {
    let (seq, anns) = synth::generate(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let cands = candidates::extract(&seq, &ExtractConfig::default()).map_err(|e| e.to_string())?;
    let sigma = SigmaParams::default();
    // Four crops that each hold an event peak.
    let pairs: Vec<TrainingPair> = cands
        .into_iter()
        .filter_map(|c| {
            let t = build_targets(&c, &anns, &sigma).ok()?;
            (t.max_value() > 0.9).then_some((c, t))
        })
        .take(4)
        .collect();
    ensure(pairs.len() == 4, "fewer than four crops with an event")?;
    let baseline = pairs
        .iter()
        .map(|(c, t)| {
            let zero = Volume3::zeros(t.shape());
            mse_loss(&zero, t, &c.meta.pad_mask, LossMode::PerVoxelMean).unwrap().0
        })
        .sum::<f64>()
        / 4.0;

    let net = Network::from_config(&NetConfig::default()).map_err(|e| e.to_string())?;
    let mut init = net.init_params(0);
    net.set_head_prior(&mut init, 0.01).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&net, cfg, init).map_err(|e| e.to_string())?;
    let mut mse = f64::INFINITY;
    for epoch in 1..=500 {
        trainer.run_epoch(&pairs).map_err(|e| e.to_string())?;
        if epoch % 10 == 0 {
            mse = mean_mse(&net, trainer.params(), &pairs);
            // Below the threshold and well below the all-zero prediction,
            // so the fit reflects the targets rather than the background.
            if mse < 1e-3 && mse < 0.25 * baseline {
                return Ok(format!("MSE {mse:.2e} after {epoch} epochs (all-zero {baseline:.2e})"));
            }
        }
    }
    Err(format!("MSE {mse:.2e} after 500 epochs (all-zero {baseline:.2e})"))
}

/// Annotations inside the observed part of a crop, in local coordinates.
fn inside(meta: &CropMeta, shape: Shape3, anns: &[Annotation]) -> usize {
    anns.iter()
        .map(|a| to_local(a.point, meta))
        .filter(|p| {
            p.x >= 0.0
                && p.y >= 0.0
                && p.t >= 0.0
                && p.x < shape.width as f64
                && p.y < shape.height as f64
                && (p.t as usize) < shape.depth
                && !meta.pad_mask[p.t as usize]
        })
        .count()
}

fn end_to_end(dir: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = PipelineConfig::default();
    let summary = pipeline::run(&cfg, dir, false).map_err(|e| e.to_string())?;
    let minutes = start.elapsed().as_secs_f64() / 60.0;

    // What split B actually contains.
    let test = dir.join("data/test");
    let seq = io::load_sequence(&test.join("frames")).map_err(|e| e.to_string())?;
    let anns = io::read_annotations(&test.join("annotations.csv"))
        .map_err(|e| e.to_string())?
        .rows;
    let cands = candidates::extract(&seq, &cfg.extract).map_err(|e| e.to_string())?;
    let multi = cands
        .iter()
        .filter(|c| inside(&c.meta, c.volume.shape(), &anns) >= 2)
        .count();
    let tracks = candidates::extract_tracks(&seq, &cfg.extract).map_err(|e| e.to_string())?;
    let distractors = tracks
        .iter()
        .filter(|tr| {
            !anns.iter().any(|a| {
                tr.boxes.iter().enumerate().any(|(k, b)| {
                    let t = (tr.start_t + k) as f64;
                    (a.point.t - t).abs() <= 6.0
                        && ((a.point.x - b.cx).powi(2) + (a.point.y - b.cy).powi(2)).sqrt() <= 15.0
                })
            })
        })
        .count();
    ensure(anns.len() >= 20, format!("split B has {} events", anns.len()))?;
    ensure(multi >= 2, format!("split B has {multi} multi-event candidates"))?;
    ensure(distractors >= 5, format!("split B has {distractors} distractor tracks"))?;
    let m = summary.metrics;
    let detail = format!(
        "F1 {:.3} (P {:.3} R {:.3}, tp {} fp {} fn {}); B: {} events, {multi} multi-event crops, \
         {distractors} distractor tracks; {minutes:.1} min",
        m.f1, m.precision, m.recall, m.tp, m.fp, m.fn_, anns.len()
    );
    ensure(m.f1 >= 0.9, detail.clone())?;
    ensure(minutes < 20.0, detail.clone())?;
    Ok(detail)
}

fn multi_event_representation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sigma = SigmaParams::default();
    let det = DetectConfig::default();
    let shape = Shape3::new(128, 128, 16);
    let meta = CropMeta {
        origin_x: 200,
        origin_y: 90,
        origin_t: 12,
        pad_mask: vec![false; 16],
    };
    let mut trials = 0;
    for k in [2usize, 3] {
        for _ in 0..100 {
            // Integer voxels, pairwise at least 4 sigma apart in normalized distance.
            let mut pts: Vec<Point3> = Vec::new();
            while pts.len() < k {
                let p = Point3::new(
                    rng.random_range(0..128) as f64,
                    rng.random_range(0..128) as f64,
                    rng.random_range(0..16) as f64,
                );
                let far = pts.iter().all(|q| {
                    let d2 = ((p.x - q.x) / sigma.sigma_x).powi(2)
                        + ((p.y - q.y) / sigma.sigma_y).powi(2)
                        + ((p.t - q.t) / sigma.sigma_t).powi(2);
                    d2 >= 16.0
                });
                if far {
                    pts.push(p);
                }
            }
            let anns: Vec<Annotation> = pts
                .iter()
                .enumerate()
                .map(|(id, p)| Annotation {
                    id,
                    point: mitodet::types::to_global(*p, &meta),
                })
                .collect();
            let cand = candidates::CandidateSequence {
                volume: Volume3::zeros(shape),
                meta: meta.clone(),
                track_id: 0,
                window_offset: 0,
            };
            let target = build_targets(&cand, &anns, &sigma).map_err(|e| e.to_string())?;
            let mut got: Vec<(u64, u64, u64)> = local_maxima(&target, det.theta_peak, det.peak_radius, None)
                .iter()
                .map(|(p, _)| (p.t as u64, p.y as u64, p.x as u64))
                .collect();
            let mut want: Vec<(u64, u64, u64)> = pts.iter().map(|p| (p.t as u64, p.y as u64, p.x as u64)).collect();
            got.sort();
            want.sort();
            ensure(got == want, format!("k={k}: peaks {got:?}, annotations {want:?}"))?;
            trials += 1;
        }
    }
    Ok(format!("{trials} crops, every peak at its annotation"))
}

fn sweep_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let temporal: Vec<f64> = (0..=12).map(f64::from).collect();
    let spatial: Vec<f64> = (0..=12).map(|v| 2.5 * v as f64).collect();
    for k in 0..20 {
        let (dets, gts) = common::random_instance(&mut rng, 12, 40.0);
        for (axis, values) in [(SweepAxis::Temporal, &temporal), (SweepAxis::Spatial, &spatial)] {
            let rows = eval::sweep(&dets, &gts, axis, values, &Tolerance::default());
            let ok = rows.windows(2).all(|w| w[0].metrics.tp <= w[1].metrics.tp);
            ensure(ok, format!("instance {k}: tp decreases along {}", axis.name()))?;
        }
    }
    Ok("20 instances, tp non-decreasing on both axes".into())
}

const SMALL_RUN: &str = r#"{
  "data": {"synth": {"config": {"width": 192, "height": 192, "frames": 24, "n_events": 4,
                                "n_close_pairs": 1, "n_distractors": 1},
                     "train_seeds": [0], "test_seed": 1}},
  "train": {"epochs": 2, "batch_size": 2}
}"#;

fn determinism(dir: &Path) -> Outcome {
    let config = dir.join("config.json");
    std::fs::write(&config, SMALL_RUN).map_err(|e| e.to_string())?;
    let runs = [("a", "1"), ("b", "1"), ("c", "4")];
    let mut outputs = Vec::new();
    for (name, threads) in runs {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_mitodet"))
            .args(["--threads", threads, "pipeline", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), format!("run {name} exited with {status}"))?;
        let files: Vec<Vec<u8>> = ["loss_curve.csv", "detections.csv", "metrics.json"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap_or_default())
            .collect();
        ensure(files.iter().all(|f| !f.is_empty()), format!("run {name} left an output empty"))?;
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1], "two runs with one thread differ")?;
    ensure(outputs[0] == outputs[2], "--threads 1 and --threads 4 differ")?;
    Ok("loss curve, detections and metrics byte-identical over 3 runs (1, 1, 4 threads)".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 metric self-consistency", Box::new(metric_consistency)),
        ("2 likelihood-map exactness", Box::new(likelihood_exactness)),
        ("3 gradient correctness", Box::new(gradient_correctness)),
        ("4 oracle equivalence", Box::new(oracle_equivalence)),
        ("5 overfit sanity", Box::new(overfit_sanity)),
        ("6 end-to-end detection", Box::new(|| end_to_end(&tmp.path().join("e2e")))),
        ("7 multi-event representation", Box::new(multi_event_representation)),
        ("8 sweep monotonicity", Box::new(sweep_monotonicity)),
        ("9 determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
