//! On-disk formats.
//!
//! * frame directories: `frame_%05d.png`, 8- or 16-bit grayscale, contiguous from 0
//! * annotation CSV `t,x,y` and detection CSV `t,x,y,score`
//! * volumes: `MVOL`, u32 version, u32 width/height/depth, f64 LE voxels (x fastest)
//! * checkpoints: see [`save_checkpoint`]
//! * metrics JSON, sweep CSV (+ optional SVG chart), loss curve CSV
//!
//! All integers are little-endian. Writers are deterministic.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSequence;
use crate::eval::{Metrics, SweepRow};
use crate::net::{Arch, LayerKind, LayerSpec, Params};
use crate::types::{Annotation, CropMeta, Detection, Frame, ImageSequence, Point3, Shape3, Volume3};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing frame {index} in {dir}")]
    MissingFrame { dir: PathBuf, index: usize },
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("frame {index} is {found:?}, expected {expected:?}")]
    MixedDimensions {
        index: usize,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(fs_err(path))
}

fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(fs_err(path))
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

fn parse_frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    (digits.len() == 5 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

/// Loads `frame_%05d.png` files, dividing by the bit depth's maximum.
pub fn load_sequence(dir: &Path) -> Result<ImageSequence, IoError> {
    let mut indexed: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(fs_err(dir))? {
        let entry = entry.map_err(fs_err(dir))?;
        if let Some(i) = entry.file_name().to_str().and_then(parse_frame_index) {
            indexed.push((i, entry.path()));
        }
    }
    if indexed.is_empty() {
        return Err(IoError::NoFrames(dir.to_path_buf()));
    }
    indexed.sort();
    for (expect, (i, _)) in indexed.iter().enumerate() {
        if *i != expect {
            return Err(IoError::MissingFrame {
                dir: dir.to_path_buf(),
                index: expect,
            });
        }
    }
    let mut frames = Vec::with_capacity(indexed.len());
    let mut dims = None;
    for (index, path) in &indexed {
        let img = image::open(path).map_err(|e| IoError::UnsupportedFormat {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let (w, h) = (img.width(), img.height());
        let expected = *dims.get_or_insert((w, h));
        if expected != (w, h) {
            return Err(IoError::MixedDimensions {
                index: *index,
                expected,
                found: (w, h),
            });
        }
        let data: Vec<f64> = match img {
            image::DynamicImage::ImageLuma8(b) => {
                b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
            }
            image::DynamicImage::ImageLuma16(b) => {
                b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
            }
            other => {
                return Err(IoError::UnsupportedFormat {
                    path: path.clone(),
                    reason: format!("{:?} is not 8/16-bit grayscale", other.color()),
                })
            }
        };
        frames.push(Frame::from_vec(w as usize, h as usize, data));
    }
    Ok(ImageSequence::new(frames).expect("frames validated above"))
}

/// Bit depth used when writing frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Writes every frame as `frame_%05d.png`, rounding to the nearest level.
pub fn save_sequence(seq: &ImageSequence, dir: &Path, depth: BitDepth) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(fs_err(dir))?;
    let (w, h) = (seq.width() as u32, seq.height() as u32);
    for (i, f) in seq.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        let res = match depth {
            BitDepth::Eight => {
                let raw: Vec<u8> = f.data.iter().map(|v| (v * 255.0).round() as u8).collect();
                ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                    .expect("buffer size")
                    .save(&path)
            }
            BitDepth::Sixteen => {
                let raw: Vec<u16> = f.data.iter().map(|v| (v * 65535.0).round() as u16).collect();
                ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
                    .expect("buffer size")
                    .save(&path)
            }
        };
        res.map_err(|e| IoError::UnsupportedFormat {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// Ground-truth events of one sequence, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationTable {
    pub sequence: String,
    pub rows: Vec<Annotation>,
}

impl AnnotationTable {
    pub fn new(sequence: impl Into<String>, rows: Vec<Annotation>) -> Self {
        Self {
            sequence: sequence.into(),
            rows,
        }
    }

    /// Ids of rows lying outside `seq`. Such rows are kept; callers decide.
    pub fn out_of_bounds(&self, seq: &ImageSequence) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|a| !seq.contains(&a.point))
            .map(|a| a.id)
            .collect()
    }
}

#[derive(Deserialize)]
struct AnnotationRow {
    t: i64,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct DetectionRow {
    t: f64,
    x: f64,
    y: f64,
    score: f64,
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>, IoError> {
    let bytes = read_file(path)?;
    let parse = |line: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let found = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(parse(1, format!("expected header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        match rec {
            Ok(row) => out.push(row),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse(line, e.to_string()));
            }
        }
    }
    // csv does not expose positions of successfully parsed rows; rows are
    // one per line after the header.
    Ok(out.into_iter().enumerate().map(|(i, r)| (i as u64 + 2, r)).collect())
}

/// Reads `t,x,y` with 0-based coordinates.
pub fn read_annotations(path: &Path) -> Result<AnnotationTable, IoError> {
    read_annotations_with_base(path, 0)
}

/// Reads `t,x,y`, subtracting `index_base` from every coordinate.
pub fn read_annotations_with_base(path: &Path, index_base: i64) -> Result<AnnotationTable, IoError> {
    let rows: Vec<(u64, AnnotationRow)> = read_table(path, &["t", "x", "y"])?;
    let base = index_base as f64;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if !(r.x.is_finite() && r.y.is_finite()) {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: "non-finite coordinate".into(),
            });
        }
        if !seen.insert((r.t, r.x.to_bits(), r.y.to_bits())) {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate annotation ({}, {}, {})", r.t, r.x, r.y),
            });
        }
        out.push(Annotation {
            id: out.len(),
            point: Point3::new(r.x - base, r.y - base, (r.t - index_base) as f64),
        });
    }
    let sequence = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    Ok(AnnotationTable::new(sequence, out))
}

/// Reads annotations and logs a warning for every row outside `seq`.
pub fn read_annotations_for(
    path: &Path,
    seq: &ImageSequence,
    index_base: i64,
) -> Result<AnnotationTable, IoError> {
    let table = read_annotations_with_base(path, index_base)?;
    for id in table.out_of_bounds(seq) {
        log::warn!("{}: annotation row {} lies outside the sequence", path.display(), id + 2);
    }
    Ok(table)
}

fn fmt_coord(v: f64) -> String {
    // Shortest representation that parses back to the same value.
    format!("{v}")
}

pub fn annotations_to_csv(rows: &[Annotation]) -> String {
    let mut s = String::from("t,x,y\n");
    for a in rows {
        let _ = writeln!(
            s,
            "{},{},{}",
            a.point.t.round() as i64,
            fmt_coord(a.point.x),
            fmt_coord(a.point.y)
        );
    }
    s
}

pub fn write_annotations(rows: &[Annotation], path: &Path) -> Result<(), IoError> {
    write_file(path, annotations_to_csv(rows))
}

/// `t,x,y,score`, score with 6 decimals.
pub fn detections_to_csv(dets: &[Detection]) -> String {
    let mut s = String::from("t,x,y,score\n");
    for d in dets {
        let _ = writeln!(
            s,
            "{},{},{},{:.6}",
            fmt_coord(d.point.t),
            fmt_coord(d.point.x),
            fmt_coord(d.point.y),
            d.score
        );
    }
    s
}

pub fn write_detections(dets: &[Detection], path: &Path) -> Result<(), IoError> {
    write_file(path, detections_to_csv(dets))
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, IoError> {
    let rows: Vec<(u64, DetectionRow)> = read_table(path, &["t", "x", "y", "score"])?;
    Ok(rows
        .into_iter()
        .map(|(_, r)| Detection {
            point: Point3::new(r.x, r.y, r.t),
            score: r.score,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Volumes and candidates
// ---------------------------------------------------------------------------

const VOLUME_MAGIC: &[u8; 4] = b"MVOL";
const VOLUME_VERSION: u32 = 1;

pub fn volume_to_bytes(v: &Volume3) -> Vec<u8> {
    let s = v.shape();
    let mut out = Vec::with_capacity(20 + 8 * s.len());
    out.extend_from_slice(VOLUME_MAGIC);
    out.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    for d in [s.width, s.height, s.depth] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> IoError {
        IoError::CorruptFile {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.bytes.len() {
            return Err(self.corrupt(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn volume_from_bytes(bytes: &[u8], path: &Path) -> Result<Volume3, IoError> {
    let mut c = Cursor { path, bytes, pos: 0 };
    if c.take(4)? != VOLUME_MAGIC {
        return Err(c.corrupt("bad magic"));
    }
    let version = c.u32()?;
    if version != VOLUME_VERSION {
        return Err(IoError::VersionMismatch {
            found: version,
            expected: VOLUME_VERSION,
        });
    }
    let shape = Shape3::new(c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let n = shape.len();
    let raw = c.take(n.checked_mul(8).ok_or_else(|| c.corrupt("shape overflow"))?)?;
    c.finish()?;
    let data = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Volume3::from_vec(shape, data).ok_or_else(|| c.corrupt("empty shape or non-finite voxel"))
}

pub fn save_volume(v: &Volume3, path: &Path) -> Result<(), IoError> {
    write_file(path, volume_to_bytes(v))
}

pub fn load_volume(path: &Path) -> Result<Volume3, IoError> {
    volume_from_bytes(&read_file(path)?, path)
}

/// JSON sidecar stored next to each candidate volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSidecar {
    #[serde(flatten)]
    pub meta: CropMeta,
    pub track_id: usize,
    pub window_offset: usize,
}

pub fn candidate_stem(index: usize) -> String {
    format!("cand_{index:05}")
}

fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    serde_json::from_slice(&read_file(path)?).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `cand_%05d.vol` + `cand_%05d.json` per candidate.
pub fn save_candidates(cands: &[CandidateSequence], dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(fs_err(dir))?;
    for (i, c) in cands.iter().enumerate() {
        let stem = candidate_stem(i);
        save_volume(&c.volume, &dir.join(format!("{stem}.vol")))?;
        let side = CandidateSidecar {
            meta: c.meta.clone(),
            track_id: c.track_id,
            window_offset: c.window_offset,
        };
        write_file(&dir.join(format!("{stem}.json")), to_json_pretty(&side))?;
    }
    Ok(())
}

/// Indices `0, 1, ...` of `cand_%05d.<ext>` files present in `dir`, stopping at the first gap.
fn contiguous_stems(dir: &Path, ext: &str) -> Vec<String> {
    (0..)
        .map(candidate_stem)
        .take_while(|s| dir.join(format!("{s}.{ext}")).exists())
        .collect()
}

pub fn load_candidates(dir: &Path) -> Result<Vec<CandidateSequence>, IoError> {
    contiguous_stems(dir, "json")
        .into_iter()
        .map(|stem| {
            let side: CandidateSidecar = read_json(&dir.join(format!("{stem}.json")))?;
            let vol_path = dir.join(format!("{stem}.vol"));
            let volume = load_volume(&vol_path)?;
            if side.meta.pad_mask.len() != volume.shape().depth {
                return Err(IoError::CorruptFile {
                    path: vol_path,
                    reason: "pad mask length differs from volume depth".into(),
                });
            }
            Ok(CandidateSequence {
                volume,
                meta: side.meta,
                track_id: side.track_id,
                window_offset: side.window_offset,
            })
        })
        .collect()
}

/// Writes one `cand_%05d.vol` target per candidate index.
pub fn save_targets(targets: &[Volume3], dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(fs_err(dir))?;
    for (i, t) in targets.iter().enumerate() {
        save_volume(t, &dir.join(format!("{}.vol", candidate_stem(i))))?;
    }
    Ok(())
}

pub fn load_targets(dir: &Path) -> Result<Vec<Volume3>, IoError> {
    contiguous_stems(dir, "vol")
        .into_iter()
        .map(|stem| load_volume(&dir.join(format!("{stem}.vol"))))
        .collect()
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MITOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const NO_SKIP: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Arch,
    pub params: Params<f32>,
    pub step: u64,
    pub seed: u64,
}

/// Layout:
///
/// ```text
/// magic "MITOCKPT" | u32 version | u32 n_layers
/// n_layers x [u32 kind, u32 in, u32 out, u32 kernel, u32 stride, u32 skip_from (0xFFFFFFFF = none)]
/// u64 step | u64 seed | u64 n_params | n_params x f32
/// ```
pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ck.arch.layers.len() as u32).to_le_bytes());
    for l in &ck.arch.layers {
        let skip = l.skip_from.map_or(NO_SKIP, |s| s as u32);
        for v in [
            l.kind.code() as u32,
            l.in_channels as u32,
            l.out_channels as u32,
            l.kernel as u32,
            l.stride as u32,
            skip,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&ck.step.to_le_bytes());
    out.extend_from_slice(&ck.seed.to_le_bytes());
    out.extend_from_slice(&(ck.params.values.len() as u64).to_le_bytes());
    for p in &ck.params.values {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint, IoError> {
    let mut c = Cursor { path, bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(c.corrupt("bad magic"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(IoError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let n_layers = c.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let kind = c.u32()?;
        let kind = u8::try_from(kind)
            .ok()
            .and_then(LayerKind::from_code)
            .ok_or_else(|| c.corrupt(format!("unknown layer kind {kind}")))?;
        let (i, o, k, s, skip) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
        layers.push(LayerSpec {
            kind,
            in_channels: i as usize,
            out_channels: o as usize,
            kernel: k as usize,
            stride: s as usize,
            skip_from: (skip != NO_SKIP).then_some(skip as usize),
        });
    }
    let arch = Arch { layers };
    arch.validate()
        .map_err(|e| c.corrupt(format!("architecture: {e}")))?;
    let step = c.u64()?;
    let seed = c.u64()?;
    let n = c.u64()? as usize;
    if n != arch.param_count() {
        return Err(c.corrupt(format!(
            "{n} parameters stored, architecture implies {}",
            arch.param_count()
        )));
    }
    let raw = c.take(n * 4)?;
    c.finish()?;
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        arch,
        params: Params { values },
        step,
        seed,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), IoError> {
    write_file(path, checkpoint_to_bytes(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    checkpoint_from_bytes(&read_file(path)?, path)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

pub fn metrics_to_json(m: &Metrics) -> String {
    to_json_pretty(m)
}

pub fn write_metrics(m: &Metrics, path: &Path) -> Result<(), IoError> {
    write_file(path, metrics_to_json(m))
}

pub fn read_metrics(path: &Path) -> Result<Metrics, IoError> {
    read_json(path)
}

pub fn write_json<T: Serialize>(v: &T, path: &Path) -> Result<(), IoError> {
    write_file(path, to_json_pretty(v))
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    read_json(path)
}

/// `axis,threshold,precision,recall,f1`.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,threshold,precision,recall,f1\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6}",
            r.axis.name(),
            r.threshold,
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.f1
        );
    }
    s
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<(), IoError> {
    write_file(path, sweep_to_csv(rows))
}

/// Minimal line chart of precision, recall and F1 against the threshold.
pub fn sweep_to_svg(rows: &[SweepRow]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 40.0;
    let axis = rows.first().map_or("threshold", |r| r.axis.name());
    let xs: Vec<f64> = rows.iter().map(|r| r.threshold).collect();
    let (x0, x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| M + (x - x0) / span * (W - 2.0 * M);
    let py = |y: f64| H - M - y * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{axis} threshold</text>"#,
        W / 2.0,
        H - 8.0
    );
    let series: [(&str, &str, fn(&SweepRow) -> f64); 3] = [
        ("precision", "#1f77b4", |r| r.metrics.precision),
        ("recall", "#2ca02c", |r| r.metrics.recall),
        ("f1", "#d62728", |r| r.metrics.f1),
    ];
    for (k, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.threshold), py(get(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            W - M - 60.0,
            M + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `epoch,loss`, epochs numbered from 1.
pub fn loss_curve_to_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(s, "{},{l:e}", i + 1);
    }
    s
}

pub fn write_loss_curve(curve: &[f64], path: &Path) -> Result<(), IoError> {
    write_file(path, loss_curve_to_csv(curve))
}
