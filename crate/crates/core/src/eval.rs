//! Detection scoring against ground truth.
//!
//! A detection may match an annotation when it lies within `tau_t` frames
//! and `tau_s` pixels of it. Each detection and each annotation is used at
//! most once; among all maximum-cardinality matchings the one with the
//! smallest total spatial distance is chosen.

use serde::{Deserialize, Serialize};

use crate::types::{Annotation, Detection, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMetric {
    #[default]
    Euclidean,
    /// Per-axis: `max(|dx|, |dy|)`.
    Chebyshev,
}

impl SpatialMetric {
    pub fn distance(&self, a: &Point3, b: &Point3) -> f64 {
        match self {
            SpatialMetric::Euclidean => a.spatial_distance(b),
            SpatialMetric::Chebyshev => (a.x - b.x).abs().max((a.y - b.y).abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    /// Frames.
    pub tau_t: f64,
    /// Pixels.
    pub tau_s: f64,
    pub metric: SpatialMetric,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            tau_t: 6.0,
            tau_s: 15.0,
            metric: SpatialMetric::Euclidean,
        }
    }
}

impl Tolerance {
    fn feasible(&self, d: &Point3, g: &Point3) -> Option<f64> {
        let ds = self.metric.distance(d, g);
        ((d.t - g.t).abs() <= self.tau_t && ds <= self.tau_s).then_some(ds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    /// Index into the detection list.
    pub detection: usize,
    /// Index into the annotation list.
    pub annotation: usize,
    pub spatial: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Precision, recall and F1 with the counts they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf(m: &MatchResult) -> Metrics {
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    Metrics {
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Minimum-cost assignment of every row of a `rows x cols` matrix
/// (`rows <= cols`) to a distinct column. Returns the column of each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Optimal one-to-one matching of detections to annotations.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], tol: &Tolerance) -> MatchResult {
    let (nd, ng) = (dets.len(), gts.len());
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            if let Some(s) = tol.feasible(&d.point, &g.point) {
                edges.push((i, j, s));
            }
        }
    }
    // Solve each connected block of the feasibility graph on its own.
    let mut parent: Vec<usize> = (0..nd + ng).collect();
    for &(i, j, _) in &edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, nd + j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut blocks: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> =
        std::collections::BTreeMap::new();
    for &(i, j, _) in &edges {
        let root = find(&mut parent, i);
        let b = blocks.entry(root).or_default();
        if !b.0.contains(&i) {
            b.0.push(i);
        }
        if !b.1.contains(&j) {
            b.1.push(j);
        }
    }
    let weight: std::collections::HashMap<(usize, usize), f64> =
        edges.iter().map(|&(i, j, s)| ((i, j), s)).collect();

    let mut pairs = Vec::new();
    for (_, (mut rows, mut cols)) in blocks {
        rows.sort_unstable();
        cols.sort_unstable();
        let transpose = rows.len() > cols.len();
        let (r_ids, c_ids) = if transpose { (&cols, &rows) } else { (&rows, &cols) };
        // Any extra matched pair outweighs every possible distance total.
        let big = (r_ids.len() as f64 + 1.0) * (tol.tau_s + 1.0);
        let cost: Vec<Vec<f64>> = r_ids
            .iter()
            .map(|&r| {
                c_ids
                    .iter()
                    .map(|&c| {
                        let key = if transpose { (c, r) } else { (r, c) };
                        weight.get(&key).copied().unwrap_or(big)
                    })
                    .collect()
            })
            .collect();
        for (ri, ci) in hungarian(&cost).into_iter().enumerate() {
            let (r, c) = (r_ids[ri], c_ids[ci]);
            let (i, j) = if transpose { (c, r) } else { (r, c) };
            if let Some(&s) = weight.get(&(i, j)) {
                pairs.push(MatchPair {
                    detection: i,
                    annotation: j,
                    spatial: s,
                    dt: dets[i].point.t - gts[j].point.t,
                });
            }
        }
    }
    pairs.sort_by_key(|p| (p.detection, p.annotation));
    let tp = pairs.len();
    MatchResult {
        pairs,
        tp,
        fp: nd - tp,
        fn_: ng - tp,
    }
}

pub fn evaluate(dets: &[Detection], gts: &[Annotation], tol: &Tolerance) -> Metrics {
    prf(&match_detections(dets, gts, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Temporal,
    Spatial,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Temporal => "temporal",
            SweepAxis::Spatial => "spatial",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temporal" | "t" => Ok(SweepAxis::Temporal),
            "spatial" | "s" => Ok(SweepAxis::Spatial),
            other => Err(format!("unknown sweep axis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub threshold: f64,
    pub metrics: Metrics,
}

/// Re-scores with one tolerance replaced by each value of `thresholds`;
/// the other axis stays at `base`.
pub fn sweep(
    dets: &[Detection],
    gts: &[Annotation],
    axis: SweepAxis,
    thresholds: &[f64],
    base: &Tolerance,
) -> Vec<SweepRow> {
    thresholds
        .iter()
        .map(|&threshold| {
            let tol = match axis {
                SweepAxis::Temporal => Tolerance {
                    tau_t: threshold,
                    ..*base
                },
                SweepAxis::Spatial => Tolerance {
                    tau_s: threshold,
                    ..*base
                },
            };
            SweepRow {
                axis,
                threshold,
                metrics: evaluate(dets, gts, &tol),
            }
        })
        .collect()
}
