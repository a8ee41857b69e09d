//! Synthetic time-lapse sequences with exact ground truth.
//!
//! Cells are isotropic Gaussian bumps on a textured background. A dividing
//! cell brightens over `ramp` frames, peaks at its annotated frame, then is
//! replaced by two dimmer daughters that move apart. Distractors brighten,
//! hold and fade without dividing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::types::{Annotation, Frame, ImageSequence, Point3};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("could not place {what} with separation {min_separation} after {attempts} attempts")]
    Placement {
        what: &'static str,
        min_separation: f64,
        attempts: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub n_events: usize,
    /// How many events are placed as close partners of another event, so
    /// that both fall into one candidate crop.
    pub n_close_pairs: usize,
    pub n_distractors: usize,
    pub background: f64,
    /// Amplitude of the smooth value-noise texture.
    pub texture_amplitude: f64,
    /// Per-pixel Gaussian noise.
    pub noise_sigma: f64,
    /// Peak brightness above background.
    pub peak_intensity: f64,
    /// Gaussian sigma of a cell, in pixels.
    pub cell_radius: f64,
    /// Frames over which a cell brightens to its peak.
    pub ramp: usize,
    pub daughter_intensity: f64,
    pub daughter_radius: f64,
    /// Speed (px/frame) at which each daughter moves away from the split point.
    pub daughter_speed: f64,
    pub split_frames: usize,
    /// Frames a distractor stays at peak brightness, drawn uniformly.
    pub distractor_hold: (usize, usize),
    /// Minimum spatial distance between any two cells.
    pub min_separation: f64,
    /// Minimum distance of a cell centre from the image border.
    pub margin: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            frames: 48,
            n_events: 20,
            n_close_pairs: 3,
            n_distractors: 6,
            background: 0.15,
            texture_amplitude: 0.05,
            noise_sigma: 0.02,
            peak_intensity: 0.75,
            cell_radius: 5.0,
            ramp: 8,
            daughter_intensity: 0.28,
            daughter_radius: 3.0,
            daughter_speed: 1.5,
            split_frames: 6,
            distractor_hold: (2, 8),
            min_separation: 30.0,
            margin: 16,
            seed: 0,
        }
    }
}

const MAX_ATTEMPTS: usize = 10_000;
const TEXTURE_CELL: usize = 32;
const CLOSE_PAIR_SPREAD: f64 = 1.5;
const CLOSE_PAIR_MAX_DT: i64 = 3;

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.width <= 2 * self.margin || self.height <= 2 * self.margin {
            return bad(format!(
                "{}x{} leaves no room inside a {} px margin",
                self.width, self.height, self.margin
            ));
        }
        if !(self.min_separation > 0.0) {
            return bad("min_separation must be positive".into());
        }
        if self.n_events > 0 && self.frames < self.ramp + self.split_frames + 2 {
            return bad(format!(
                "{} frames cannot hold a {}-frame ramp and {} split frames",
                self.frames, self.ramp, self.split_frames
            ));
        }
        if 2 * self.n_close_pairs > self.n_events {
            return bad("n_close_pairs needs two events per pair".into());
        }
        if self.distractor_hold.0 > self.distractor_hold.1 {
            return bad("distractor_hold must be (min, max)".into());
        }
        if self.n_distractors > 0 && self.frames < 2 * self.ramp + self.distractor_hold.0 + 1 {
            return bad("too few frames for a distractor".into());
        }
        for (name, v) in [
            ("background", self.background),
            ("texture_amplitude", self.texture_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("peak_intensity", self.peak_intensity),
            ("daughter_intensity", self.daughter_intensity),
            ("daughter_speed", self.daughter_speed),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0"));
            }
        }
        if !(self.cell_radius > 0.0 && self.daughter_radius > 0.0) {
            return bad("cell radii must be positive".into());
        }
        if self.ramp == 0 {
            return bad("ramp must be >= 1".into());
        }
        Ok(())
    }
}

/// One Gaussian bump in one frame.
#[derive(Debug, Clone, Copy)]
struct Bump {
    x: f64,
    y: f64,
    sigma: f64,
    amp: f64,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// Divides at `t`; daughters move along `angle`.
    Event { t: usize, angle: f64 },
    Distractor { start: usize, hold: usize },
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    x: f64,
    y: f64,
    kind: Kind,
}

impl Cell {
    fn bumps(&self, frame: usize, cfg: &SynthConfig, out: &mut Vec<Bump>) {
        let ramp = cfg.ramp as f64;
        let f = frame as f64;
        let cell = |amp: f64| Bump {
            x: self.x,
            y: self.y,
            sigma: cfg.cell_radius,
            amp,
        };
        match self.kind {
            Kind::Event { t, angle } => {
                let tk = t as f64;
                if f <= tk && f > tk - ramp {
                    out.push(cell(cfg.peak_intensity * (1.0 - (tk - f) / ramp)));
                } else if frame > t && frame <= t + cfg.split_frames {
                    let k = f - tk;
                    let d = cfg.daughter_speed * k;
                    let amp = cfg.daughter_intensity * 0.9f64.powf(k - 1.0);
                    for s in [-1.0, 1.0] {
                        out.push(Bump {
                            x: self.x + s * d * angle.cos(),
                            y: self.y + s * d * angle.sin(),
                            sigma: cfg.daughter_radius,
                            amp,
                        });
                    }
                }
            }
            Kind::Distractor { start, hold } => {
                let s = start as f64;
                let peak_end = s + ramp + hold as f64;
                let amp = if f < s {
                    0.0
                } else if f < s + ramp {
                    (f - s + 1.0) / ramp
                } else if f <= peak_end {
                    1.0
                } else {
                    1.0 - (f - peak_end) / ramp
                };
                if amp > 0.0 {
                    out.push(cell(cfg.peak_intensity * amp));
                }
            }
        }
    }
}

/// Bilinearly interpolated lattice noise in [-1, 1].
struct ValueNoise {
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = width / TEXTURE_CELL + 2;
        let rows = height / TEXTURE_CELL + 2;
        let lattice = (0..cols * rows).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self { cols, lattice }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let (gx, gy) = (x / TEXTURE_CELL, y / TEXTURE_CELL);
        let fx = (x % TEXTURE_CELL) as f64 / TEXTURE_CELL as f64;
        let fy = (y % TEXTURE_CELL) as f64 / TEXTURE_CELL as f64;
        // smoothstep hides the lattice
        let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
        let v = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let top = v(gx, gy) * (1.0 - sx) + v(gx + 1, gy) * sx;
        let bottom = v(gx, gy + 1) * (1.0 - sx) + v(gx + 1, gy + 1) * sx;
        top * (1.0 - sy) + bottom * sy
    }
}

fn place(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    taken: &[(f64, f64)],
    what: &'static str,
    mut propose: impl FnMut(&mut ChaCha8Rng) -> Option<(f64, f64)>,
) -> Result<(f64, f64), SynthError> {
    let (w, h, m) = (cfg.width as f64, cfg.height as f64, cfg.margin as f64);
    for _ in 0..MAX_ATTEMPTS {
        let Some((x, y)) = propose(rng) else { continue };
        if x < m || y < m || x > w - 1.0 - m || y > h - 1.0 - m {
            continue;
        }
        if taken
            .iter()
            .all(|&(a, b)| (a - x).hypot(b - y) >= cfg.min_separation)
        {
            return Ok((x, y));
        }
    }
    Err(SynthError::Placement {
        what,
        min_separation: cfg.min_separation,
        attempts: MAX_ATTEMPTS,
    })
}

fn layout(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Cell>, SynthError> {
    let (m, w, h) = (cfg.margin, cfg.width, cfg.height);
    let uniform = |rng: &mut ChaCha8Rng| {
        Some((
            rng.random_range(m..w - m) as f64,
            rng.random_range(m..h - m) as f64,
        ))
    };
    let event_t = |rng: &mut ChaCha8Rng| rng.random_range(cfg.ramp..cfg.frames - cfg.split_frames - 1);
    let angle = |rng: &mut ChaCha8Rng| rng.random_range(0.0..std::f64::consts::PI);

    let mut cells: Vec<Cell> = Vec::new();
    let mut taken: Vec<(f64, f64)> = Vec::new();
    let singles = cfg.n_events - 2 * cfg.n_close_pairs;
    for i in 0..cfg.n_close_pairs + singles {
        let (x, y) = place(cfg, rng, &taken, "event", uniform)?;
        let t = event_t(rng);
        taken.push((x, y));
        cells.push(Cell {
            x,
            y,
            kind: Kind::Event { t, angle: angle(rng) },
        });
        if i < cfg.n_close_pairs {
            let r_max = cfg.min_separation * CLOSE_PAIR_SPREAD;
            let (px, py) = place(cfg, rng, &taken, "close event", |rng| {
                let r = rng.random_range(cfg.min_separation..=r_max);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                Some(((x + r * a.cos()).round(), (y + r * a.sin()).round()))
            })?;
            let lo = (t as i64 - CLOSE_PAIR_MAX_DT).max(cfg.ramp as i64);
            let hi = (t as i64 + CLOSE_PAIR_MAX_DT).min((cfg.frames - cfg.split_frames - 2) as i64);
            let pt = rng.random_range(lo..=hi) as usize;
            taken.push((px, py));
            cells.push(Cell {
                x: px,
                y: py,
                kind: Kind::Event { t: pt, angle: angle(rng) },
            });
        }
    }
    for _ in 0..cfg.n_distractors {
        let (x, y) = place(cfg, rng, &taken, "distractor", uniform)?;
        let hold = rng.random_range(cfg.distractor_hold.0..=cfg.distractor_hold.1);
        let span = 2 * cfg.ramp + hold;
        let start = rng.random_range(0..=cfg.frames.saturating_sub(span + 1));
        taken.push((x, y));
        cells.push(Cell {
            x,
            y,
            kind: Kind::Distractor { start, hold },
        });
    }
    Ok(cells)
}

fn render(cfg: &SynthConfig, cells: &[Cell], rng: &mut ChaCha8Rng) -> Vec<Frame> {
    let (w, h) = (cfg.width, cfg.height);
    let texture = ValueNoise::new(w, h, rng);
    let base: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| cfg.background + cfg.texture_amplitude * texture.at(x, y))
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut bumps = Vec::new();
    (0..cfg.frames)
        .map(|t| {
            let mut data = base.clone();
            bumps.clear();
            for c in cells {
                c.bumps(t, cfg, &mut bumps);
            }
            for b in &bumps {
                let reach = (4.0 * b.sigma).ceil();
                let x0 = (b.x - reach).max(0.0) as usize;
                let y0 = (b.y - reach).max(0.0) as usize;
                let x1 = ((b.x + reach) as usize).min(w - 1);
                let y1 = ((b.y + reach) as usize).min(h - 1);
                let k = 1.0 / (2.0 * b.sigma * b.sigma);
                for y in y0..=y1 {
                    let dy2 = (y as f64 - b.y).powi(2);
                    for x in x0..=x1 {
                        let d2 = (x as f64 - b.x).powi(2) + dy2;
                        data[y * w + x] += b.amp * (-d2 * k).exp();
                    }
                }
            }
            if cfg.noise_sigma > 0.0 {
                for v in &mut data {
                    *v += noise.sample(rng);
                }
            }
            data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            Frame::from_vec(w, h, data)
        })
        .collect()
}

/// Renders a sequence and its annotations; annotations are sorted by
/// `(t, y, x)` and numbered in that order.
pub fn generate(cfg: &SynthConfig) -> Result<(ImageSequence, Vec<Annotation>), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cells = layout(cfg, &mut rng)?;
    let frames = render(cfg, &cells, &mut rng);
    let mut seq = ImageSequence::new(frames).expect("frames are clamped and equally sized");
    seq.metadata.insert("source".into(), "synth".into());
    seq.metadata.insert("seed".into(), cfg.seed.to_string());

    let mut points: Vec<Point3> = cells
        .iter()
        .filter_map(|c| match c.kind {
            Kind::Event { t, .. } => Some(Point3::new(c.x, c.y, t as f64)),
            Kind::Distractor { .. } => None,
        })
        .collect();
    points.sort_by(|a, b| (a.t, a.y, a.x).partial_cmp(&(b.t, b.y, b.x)).expect("finite"));
    let anns = points
        .into_iter()
        .enumerate()
        .map(|(id, point)| Annotation { id, point })
        .collect();
    Ok((seq, anns))
}
