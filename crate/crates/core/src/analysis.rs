//! Dataset-quality metrics over logged episodes: per-subspace bin coverage,
//! activity rates, duration statistics, trajectory extent, the right-hand IK
//! heatmap, and side-by-side group comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeMetadata, FrameData, ACTION_DIM, STATE_DIM};
use crate::robot::control::{ClampBox, ControlConfig};
use crate::robot::{Hand, RobotModel, BODY_DOF, HAND_DOF};

pub const DEFAULT_BINS: usize = 20;
pub const CHASSIS_EPS: f64 = 1e-3;
pub const TRIGGER_EPS: f64 = 0.05;
/// Width of the analysis feature row: state, action, wrist Euler angles.
pub const FEATURE_DIM: usize = STATE_DIM + ACTION_DIM + 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no samples for subspace `{0}`")]
    Empty(String),
    #[error("subspace `{name}`: {message}")]
    BadSpec { name: String, message: String },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("no episodes to analyse")]
    NoEpisodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    #[default]
    Declared,
    Observed,
}

impl std::str::FromStr for RangeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "declared" => Ok(RangeMode::Declared),
            "observed" => Ok(RangeMode::Observed),
            other => Err(format!("unknown range mode `{other}` (expected declared or observed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Chassis,
    ArmIk,
    Gripper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub name: String,
    /// Column indices into the feature row.
    pub dims: Vec<usize>,
    /// Declared `(min, max)` per dimension; used in declared mode.
    pub declared: Vec<(f64, f64)>,
    /// Activity that selects frames when analysing active frames only.
    pub activity: Option<Activity>,
}

impl SubspaceSpec {
    pub fn validate(&self, width: usize) -> Result<(), AnalysisError> {
        let bad = |message: String| AnalysisError::BadSpec { name: self.name.clone(), message };
        if self.dims.is_empty() {
            return Err(bad("no dimensions".into()));
        }
        if let Some(d) = self.dims.iter().find(|d| **d >= width) {
            return Err(bad(format!("dimension {d} out of range")));
        }
        if self.declared.len() != self.dims.len() {
            return Err(bad("declared ranges do not match dimensions".into()));
        }
        if let Some((lo, hi)) = self.declared.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(bad(format!("declared range [{lo}, {hi}] is empty")));
        }
        Ok(())
    }
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * bins as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

/// Number of occupied equal-width bins for one dimension. A zero-width
/// range occupies one bin; samples outside a declared range count toward
/// the edge bins.
pub fn occupied_bins(values: impl Iterator<Item = f64> + Clone, range: Option<(f64, f64)>, bins: usize) -> usize {
    let (lo, hi) = range.unwrap_or_else(|| {
        values.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    });
    if !(hi > lo) {
        return 1;
    }
    values.map(|v| bin_index(v, lo, hi, bins)).collect::<BTreeSet<usize>>().len()
}

pub fn dimension_coverage(values: impl Iterator<Item = f64> + Clone, range: Option<(f64, f64)>, bins: usize) -> f64 {
    occupied_bins(values, range, bins) as f64 / bins as f64
}

/// Coverage ratio of `rows` over `spec`: occupied bins summed over the
/// subspace's dimensions, divided by `bins * dims`.
pub fn bin_coverage(rows: &[Vec<f64>], spec: &SubspaceSpec, bins: usize, mode: RangeMode) -> Result<f64, AnalysisError> {
    let used: usize = occupied_per_dim(rows, spec, bins, mode)?.iter().sum();
    Ok(used as f64 / (bins * spec.dims.len()) as f64)
}

pub fn occupied_per_dim(
    rows: &[Vec<f64>],
    spec: &SubspaceSpec,
    bins: usize,
    mode: RangeMode,
) -> Result<Vec<usize>, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::ZeroBins);
    }
    if rows.is_empty() {
        return Err(AnalysisError::Empty(spec.name.clone()));
    }
    spec.validate(rows[0].len())?;
    Ok(spec
        .dims
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let range = match mode {
                RangeMode::Declared => Some(spec.declared[k]),
                RangeMode::Observed => None,
            };
            occupied_bins(rows.iter().map(|r| r[d]), range, bins)
        })
        .collect())
}

/// State, action and both wrist targets as intrinsic x-y-z Euler angles.
pub fn feature_row(f: &FrameData) -> Vec<f64> {
    let mut row = Vec::with_capacity(FEATURE_DIM);
    row.extend_from_slice(&f.state_vector());
    row.extend_from_slice(&f.action_vector());
    for t in &f.ik_targets {
        row.extend_from_slice(&t.wrist.to_euler_xyz());
    }
    row
}

pub fn feature_manifest(meta: &EpisodeMetadata) -> Vec<String> {
    let mut names = meta.state_manifest.clone();
    names.extend(meta.action_manifest.iter().cloned());
    for side in ["left", "right"] {
        names.extend(["rx", "ry", "rz"].map(|a| format!("wrist_{side}_{a}")));
    }
    names
}

/// The five subspaces reported: body joints, hand joints, chassis command,
/// arm IK targets and wrist rotation.
pub fn standard_subspaces(model: &RobotModel, control: &ControlConfig) -> Vec<SubspaceSpec> {
    let body = SubspaceSpec {
        name: "body_joints".into(),
        dims: (0..BODY_DOF).collect(),
        declared: model.joints.iter().map(|j| (j.lower, j.upper)).collect(),
        activity: None,
    };
    let mut hand_ranges = Vec::new();
    for hand in Hand::BOTH {
        let a = &model.hands[hand.index()];
        hand_ranges.extend((0..HAND_DOF).map(|k| (a.open[k].min(a.grasp[k]), a.open[k].max(a.grasp[k]))));
    }
    let hand = SubspaceSpec {
        name: "hand_joints".into(),
        dims: (BODY_DOF..BODY_DOF + 2 * HAND_DOF).collect(),
        declared: hand_ranges,
        activity: Some(Activity::Gripper),
    };
    let c = &control.chassis;
    let chassis = SubspaceSpec {
        name: "chassis".into(),
        dims: vec![STATE_DIM, STATE_DIM + 1],
        declared: vec![(-c.v_max, c.v_max), (-c.w_max, c.w_max)],
        activity: Some(Activity::Chassis),
    };
    let mut ik_ranges = Vec::new();
    for b in &control.clamp_boxes {
        ik_ranges.extend([(b.min.x, b.max.x), (b.min.y, b.max.y), (b.min.z, b.max.z)]);
    }
    let arm_ik = SubspaceSpec {
        name: "arm_ik".into(),
        dims: (STATE_DIM + 2..STATE_DIM + 8).collect(),
        declared: ik_ranges,
        activity: Some(Activity::ArmIk),
    };
    let w = control.wrist_limit_deg.to_radians();
    let wrist = SubspaceSpec {
        name: "wrist_rotation".into(),
        dims: (STATE_DIM + ACTION_DIM..FEATURE_DIM).collect(),
        declared: vec![(-w, w); 6],
        activity: Some(Activity::ArmIk),
    };
    vec![body, hand, chassis, arm_ik, wrist]
}

pub fn chassis_active(f: &FrameData) -> bool {
    f.chassis.v.abs() > CHASSIS_EPS || f.chassis.w.abs() > CHASSIS_EPS
}

pub fn arm_ik_active(f: &FrameData) -> bool {
    f.ik_moved[0] || f.ik_moved[1]
}

pub fn gripper_active(f: &FrameData) -> bool {
    f.triggers.iter().any(|t| *t > TRIGGER_EPS)
}

pub fn is_active(f: &FrameData, a: Activity) -> bool {
    match a {
        Activity::Chassis => chassis_active(f),
        Activity::ArmIk => arm_ik_active(f),
        Activity::Gripper => gripper_active(f),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActivityRates {
    pub chassis: f64,
    pub arm_ik: f64,
    pub gripper: f64,
}

/// Fractions of frames in which each command channel is active. Every
/// frame is judged on its own fields, so the result ignores frame order.
pub fn activity_rates<'a>(frames: impl IntoIterator<Item = &'a FrameData>) -> ActivityRates {
    let (mut n, mut c, mut a, mut g) = (0usize, 0usize, 0usize, 0usize);
    for f in frames {
        n += 1;
        c += usize::from(chassis_active(f));
        a += usize::from(arm_ik_active(f));
        g += usize::from(gripper_active(f));
    }
    if n == 0 {
        return ActivityRates::default();
    }
    let n = n as f64;
    ActivityRates { chassis: c as f64 / n, arm_ik: a as f64 / n, gripper: g as f64 / n }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one episode.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl std::fmt::Display for DurationStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1} ± {:.1} s, min {:.1} / max {:.1}", self.mean, self.std, self.min, self.max)
    }
}

pub fn duration_stats(durations: &[f64]) -> Result<DurationStats, AnalysisError> {
    if durations.is_empty() {
        return Err(AnalysisError::NoEpisodes);
    }
    let n = durations.len();
    let mean = durations.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let max = durations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DurationStats { count: n, mean, std, min, max })
}

/// `(span_x, span_z)` of root positions pooled over all frames.
pub fn trajectory_extent<'a>(frames: impl IntoIterator<Item = &'a FrameData>) -> Option<(f64, f64)> {
    let mut b: Option<[f64; 4]> = None;
    for f in frames {
        let (x, z) = (f.root_position.x, f.root_position.z);
        b = Some(match b {
            None => [x, x, z, z],
            Some([a, c, d, e]) => [a.min(x), c.max(x), d.min(z), e.max(z)],
        });
    }
    b.map(|[x0, x1, z0, z1]| (x1 - x0, z1 - z0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub n: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// `counts[row][col]`, row indexing y and col indexing x.
    pub counts: Vec<Vec<u64>>,
}

impl Heatmap {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.counts {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }
}

/// Right-hand IK target occupancy in the XY plane over the clamp box.
pub fn ik_heatmap<'a>(frames: impl IntoIterator<Item = &'a FrameData>, n: usize, active_only: bool) -> Heatmap {
    let n = n.max(1);
    let b = ClampBox::right();
    let (xr, yr) = ((b.min.x, b.max.x), (b.min.y, b.max.y));
    let mut counts = vec![vec![0u64; n]; n];
    let r = Hand::Right.index();
    for f in frames {
        if active_only && !f.ik_moved[r] {
            continue;
        }
        let p = f.ik_targets[r].position;
        counts[bin_index(p.y, yr.0, yr.1, n)][bin_index(p.x, xr.0, xr.1, n)] += 1;
    }
    Heatmap { n, x_range: xr, y_range: yr, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub bins: usize,
    pub range_mode: RangeMode,
    pub active_only: bool,
    pub heatmap_n: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { bins: DEFAULT_BINS, range_mode: RangeMode::Declared, active_only: false, heatmap_n: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceCoverage {
    pub name: String,
    pub ratio: f64,
    pub bins: usize,
    pub range_mode: RangeMode,
    pub active_only: bool,
    pub samples: usize,
    pub per_dim: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub episodes: usize,
    pub frames: usize,
    pub subspaces: Vec<SubspaceCoverage>,
    pub activity: ActivityRates,
    pub durations: DurationStats,
    pub extent_xz: (f64, f64),
    pub ik_heatmap: Heatmap,
}

/// Full report over a set of episodes.
pub fn analyze(
    episodes: &[(EpisodeMetadata, Vec<FrameData>)],
    specs: &[SubspaceSpec],
    opts: &AnalysisOptions,
) -> Result<CoverageReport, AnalysisError> {
    if episodes.is_empty() {
        return Err(AnalysisError::NoEpisodes);
    }
    let frames: Vec<&FrameData> = episodes.iter().flat_map(|(_, f)| f.iter()).collect();
    let rows: Vec<Vec<f64>> = frames.iter().map(|f| feature_row(f)).collect();
    let mut subspaces = Vec::new();
    for spec in specs {
        let selected: Vec<Vec<f64>> = match (opts.active_only, spec.activity) {
            (true, Some(a)) => frames.iter().zip(&rows).filter(|(f, _)| is_active(f, a)).map(|(_, r)| r.clone()).collect(),
            _ => rows.clone(),
        };
        let (ratio, per_dim) = if selected.is_empty() {
            (0.0, vec![0.0; spec.dims.len()])
        } else {
            let used = occupied_per_dim(&selected, spec, opts.bins, opts.range_mode)?;
            let ratio = used.iter().sum::<usize>() as f64 / (opts.bins * used.len()) as f64;
            (ratio, used.iter().map(|u| *u as f64 / opts.bins as f64).collect())
        };
        subspaces.push(SubspaceCoverage {
            name: spec.name.clone(),
            ratio,
            bins: opts.bins,
            range_mode: opts.range_mode,
            active_only: opts.active_only && spec.activity.is_some(),
            samples: selected.len(),
            per_dim,
        });
    }
    let durations: Vec<f64> =
        episodes.iter().map(|(m, f)| m.completion_time.unwrap_or_else(|| f.last().map_or(0.0, |x| x.timestamp))).collect();
    Ok(CoverageReport {
        episodes: episodes.len(),
        frames: frames.len(),
        subspaces,
        activity: activity_rates(frames.iter().copied()),
        durations: duration_stats(&durations)?,
        extent_xz: trajectory_extent(frames.iter().copied()).unwrap_or((0.0, 0.0)),
        ik_heatmap: ik_heatmap(frames.iter().copied(), opts.heatmap_n, true),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub duration_mean: f64,
    pub duration_std: f64,
    pub activity: ActivityRates,
    /// `(subspace, b - a)` for subspaces present in both reports.
    pub coverage: Vec<(String, f64)>,
    pub heatmap: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a_label: String,
    pub b_label: String,
    pub a: CoverageReport,
    pub b: CoverageReport,
    /// Every delta is `b - a`.
    pub deltas: Deltas,
}

pub fn compare_groups(a_label: &str, a: &CoverageReport, b_label: &str, b: &CoverageReport) -> Comparison {
    let coverage = a
        .subspaces
        .iter()
        .filter_map(|sa| b.subspaces.iter().find(|sb| sb.name == sa.name).map(|sb| (sa.name.clone(), sb.ratio - sa.ratio)))
        .collect();
    let heatmap = if a.ik_heatmap.n == b.ik_heatmap.n {
        a.ik_heatmap
            .counts
            .iter()
            .zip(&b.ik_heatmap.counts)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| *y as i64 - *x as i64).collect())
            .collect()
    } else {
        Vec::new()
    };
    Comparison {
        a_label: a_label.to_string(),
        b_label: b_label.to_string(),
        a: a.clone(),
        b: b.clone(),
        deltas: Deltas {
            duration_mean: b.durations.mean - a.durations.mean,
            duration_std: b.durations.std - a.durations.std,
            activity: ActivityRates {
                chassis: b.activity.chassis - a.activity.chassis,
                arm_ik: b.activity.arm_ik - a.activity.arm_ik,
                gripper: b.activity.gripper - a.activity.gripper,
            },
            coverage,
            heatmap,
        },
    }
}

impl Comparison {
    /// Plain-text table: durations, activity rates, coverage.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let (a, b, d) = (&self.a, &self.b, &self.deltas);
        let _ = writeln!(s, "{:<22} {:>24} {:>24} {:>10}", "metric", self.a_label, self.b_label, "delta");
        let _ = writeln!(s, "{:<22} {:>24} {:>24} {:>10}", "episodes", a.episodes, b.episodes, b.episodes as i64 - a.episodes as i64);
        let _ = writeln!(
            s,
            "{:<22} {:>24} {:>24} {:>+10.2}",
            "duration (s)",
            format!("{:.1} ± {:.1}", a.durations.mean, a.durations.std),
            format!("{:.1} ± {:.1}", b.durations.mean, b.durations.std),
            d.duration_mean
        );
        let _ = writeln!(
            s,
            "{:<22} {:>24} {:>24} {:>10}",
            "duration min/max (s)",
            format!("{:.1} / {:.1}", a.durations.min, a.durations.max),
            format!("{:.1} / {:.1}", b.durations.min, b.durations.max),
            ""
        );
        for (name, x, y, dd) in [
            ("chassis activity", a.activity.chassis, b.activity.chassis, d.activity.chassis),
            ("arm IK activity", a.activity.arm_ik, b.activity.arm_ik, d.activity.arm_ik),
            ("gripper activity", a.activity.gripper, b.activity.gripper, d.activity.gripper),
        ] {
            let _ = writeln!(s, "{:<22} {:>23.1}% {:>23.1}% {:>+9.1}%", name, 100.0 * x, 100.0 * y, 100.0 * dd);
        }
        for (name, delta) in &d.coverage {
            let ra = a.subspaces.iter().find(|c| &c.name == name).map_or(0.0, |c| c.ratio);
            let rb = b.subspaces.iter().find(|c| &c.name == name).map_or(0.0, |c| c.ratio);
            let _ = writeln!(s, "{:<22} {:>23.1}% {:>23.1}% {:>+9.1}%", format!("coverage {name}"), 100.0 * ra, 100.0 * rb, 100.0 * delta);
        }
        s
    }
}
