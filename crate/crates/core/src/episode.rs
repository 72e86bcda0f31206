//! Per-frame capture and the on-disk episode layout:
//!
//! ```text
//! episode_YYYYMMDD_HHmmss/
//!     metadata.json
//!     data.json
//!     cameras/
//! ```
//!
//! Only successful episodes are written. `data.json` is a JSON array with
//! one frame object per line.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::math::{Quat, Vec3};
use crate::robot::control::{ChassisCommand, ControlCommand};
use crate::robot::ik::HandTarget;
use crate::robot::{Hand, RobotModel, ARM_RANGE, BODY_DOF, HAND_DOF, LEG_RANGE, WAIST_RANGE};
use crate::scene::Level;
use crate::sim::WorldState;

pub const EPISODE_FORMAT_VERSION: u32 = 1;
pub const STATE_DIM: usize = 44;
pub const ACTION_DIM: usize = 18;
pub const METADATA_FILE: &str = "metadata.json";
pub const DATA_FILE: &str = "data.json";
pub const CAMERAS_DIR: &str = "cameras";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub position: Vec3,
    pub orientation: Quat,
    pub attached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameData {
    pub timestamp: f64,
    pub leg_positions: [f64; 12],
    pub leg_velocities: [f64; 12],
    pub waist_positions: [f64; 3],
    pub waist_velocities: [f64; 3],
    pub arm_positions: [f64; 14],
    pub arm_velocities: [f64; 14],
    /// Left hand then right hand.
    pub hand_positions: [f64; 12],
    pub root_position: Vec3,
    pub root_orientation: Quat,
    /// Left then right, torso frame relative to each arm's home.
    pub ik_targets: [HandTarget; 2],
    pub chassis: ChassisCommand,
    pub triggers: [f64; 2],
    /// Joint targets before smoothing.
    pub raw_command: [f64; BODY_DOF],
    /// Joint targets after smoothing, as sent to the servo.
    pub smoothed_command: [f64; BODY_DOF],
    /// Whether each hand's IK target moved this frame.
    pub ik_moved: [bool; 2],
    pub objects: Vec<ObjectRecord>,
}

impl FrameData {
    pub fn body_positions(&self) -> [f64; BODY_DOF] {
        let mut q = [0.0; BODY_DOF];
        q[LEG_RANGE].copy_from_slice(&self.leg_positions);
        q[WAIST_RANGE].copy_from_slice(&self.waist_positions);
        q[ARM_RANGE].copy_from_slice(&self.arm_positions);
        q
    }

    /// Heading of the root, recovered from its orientation.
    pub fn root_yaw(&self) -> f64 {
        let f = self.root_orientation.rotate(Vec3::new(0.0, 0.0, -1.0));
        (-f.x).atan2(-f.z)
    }

    /// Body joints, hand joints, root `(x, z, yaw)`.
    pub fn state_vector(&self) -> [f64; STATE_DIM] {
        let mut s = [0.0; STATE_DIM];
        s[..BODY_DOF].copy_from_slice(&self.body_positions());
        s[BODY_DOF..BODY_DOF + 12].copy_from_slice(&self.hand_positions);
        s[41] = self.root_position.x;
        s[42] = self.root_position.z;
        s[43] = self.root_yaw();
        s
    }

    /// Chassis `(v, w)`, IK positions, wrist quaternions `(w, x, y, z)`,
    /// triggers.
    pub fn action_vector(&self) -> [f64; ACTION_DIM] {
        let mut a = [0.0; ACTION_DIM];
        a[0] = self.chassis.v;
        a[1] = self.chassis.w;
        for (h, t) in self.ik_targets.iter().enumerate() {
            a[2 + 3 * h..5 + 3 * h].copy_from_slice(&t.position.to_array());
            a[8 + 4 * h..12 + 4 * h].copy_from_slice(&t.wrist.to_array());
        }
        a[16] = self.triggers[0];
        a[17] = self.triggers[1];
        a
    }
}

/// Snapshot of the world plus the command computed for this frame.
pub fn capture_frame(world: &WorldState, cmd: &ControlCommand) -> FrameData {
    let mut hand_positions = [0.0; 2 * HAND_DOF];
    hand_positions[..HAND_DOF].copy_from_slice(&world.hand_q[0]);
    hand_positions[HAND_DOF..].copy_from_slice(&world.hand_q[1]);
    let pick = |v: &[f64; BODY_DOF], r: std::ops::Range<usize>| v[r].to_vec();
    FrameData {
        timestamp: world.time(),
        leg_positions: pick(&world.q, LEG_RANGE).try_into().expect("12 leg joints"),
        leg_velocities: pick(&world.qd, LEG_RANGE).try_into().expect("12 leg joints"),
        waist_positions: pick(&world.q, WAIST_RANGE).try_into().expect("3 waist joints"),
        waist_velocities: pick(&world.qd, WAIST_RANGE).try_into().expect("3 waist joints"),
        arm_positions: pick(&world.q, ARM_RANGE).try_into().expect("14 arm joints"),
        arm_velocities: pick(&world.qd, ARM_RANGE).try_into().expect("14 arm joints"),
        hand_positions,
        root_position: Vec3::new(world.base.x, world.base.height, world.base.z),
        root_orientation: crate::robot::base_orientation(world.base.yaw),
        ik_targets: cmd.targets.hands,
        chassis: cmd.chassis,
        triggers: cmd.triggers,
        raw_command: cmd.raw,
        smoothed_command: cmd.smoothed,
        ik_moved: cmd.ik_moved,
        objects: world
            .objects
            .iter()
            .map(|o| ObjectRecord { id: o.id, position: o.position, orientation: o.orientation, attached: o.attached.is_some() })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub format_version: u32,
    pub episode_id: String,
    pub player: String,
    pub difficulty: Level,
    pub seed: u64,
    pub template_id: String,
    pub trash_count: usize,
    pub dt: f64,
    pub total_frames: usize,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_time: Option<f64>,
    pub state_dim: usize,
    pub action_dim: usize,
    pub state_manifest: Vec<String>,
    pub action_manifest: Vec<String>,
}

/// Names of the state vector entries.
pub fn state_manifest(model: &RobotModel) -> Vec<String> {
    let mut names: Vec<String> = model.joints.iter().map(|j| j.name.clone()).collect();
    for hand in Hand::BOTH {
        names.extend(model.hand_joint_names[hand.index()].iter().cloned());
    }
    names.extend(["root_x", "root_z", "root_yaw"].map(String::from));
    names
}

/// Names of the action vector entries.
pub fn action_manifest() -> Vec<String> {
    let mut names = vec!["chassis_v".to_string(), "chassis_w".to_string()];
    for side in ["left", "right"] {
        names.extend(["x", "y", "z"].map(|a| format!("ik_{side}_{a}")));
    }
    for side in ["left", "right"] {
        names.extend(["w", "x", "y", "z"].map(|a| format!("wrist_{side}_q{a}")));
    }
    names.extend(["trigger_left", "trigger_right"].map(String::from));
    names
}

impl EpisodeMetadata {
    /// Metadata with the manifests filled in; id and frame count are set by
    /// the writer.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &RobotModel,
        player: &str,
        difficulty: Level,
        seed: u64,
        template_id: &str,
        trash_count: usize,
        dt: f64,
        completion_time: Option<f64>,
    ) -> EpisodeMetadata {
        EpisodeMetadata {
            format_version: EPISODE_FORMAT_VERSION,
            episode_id: String::new(),
            player: player.to_string(),
            difficulty,
            seed,
            template_id: template_id.to_string(),
            trash_count,
            dt,
            total_frames: 0,
            success: completion_time.is_some(),
            completion_time,
            state_dim: STATE_DIM,
            action_dim: ACTION_DIM,
            state_manifest: state_manifest(model),
            action_manifest: action_manifest(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("refusing to write an episode that did not succeed")]
    NotSuccessful,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: missing")]
    Missing { file: String },
    #[error("{file}: field `{field}`: {message}")]
    Parse { file: String, field: String, message: String },
    #[error("{file}: unsupported format_version {found} (expected {expected})")]
    Version { file: String, found: u64, expected: u32 },
    #[error("{file}: total_frames is {declared} but data.json holds {actual} frames")]
    FrameCount { file: String, declared: usize, actual: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EpisodeError + '_ {
    move |source| EpisodeError::Io { path: path.to_path_buf(), source }
}

pub fn metadata_json(meta: &EpisodeMetadata) -> String {
    let mut s = serde_json::to_string_pretty(meta).expect("metadata serializes");
    s.push('\n');
    s
}

pub fn frames_json(frames: &[FrameData]) -> String {
    let mut s = String::from("[\n");
    for (i, f) in frames.iter().enumerate() {
        if i > 0 {
            s.push_str(",\n");
        }
        s.push_str(&serde_json::to_string(f).expect("frame serializes"));
    }
    s.push_str("\n]\n");
    s
}

/// Directory name for an episode started at `stamp`.
pub fn episode_dir_name(stamp: NaiveDateTime) -> String {
    stamp.format("episode_%Y%m%d_%H%M%S").to_string()
}

/// Writes a successful episode under `root` and returns its directory. The
/// files are assembled in a temporary directory that is renamed into place;
/// a name collision within the same second gets a `_N` suffix.
pub fn write_episode(
    frames: &[FrameData],
    meta: &EpisodeMetadata,
    root: &Path,
    stamp: NaiveDateTime,
) -> Result<PathBuf, EpisodeError> {
    if !meta.success || meta.completion_time.is_none() {
        return Err(EpisodeError::NotSuccessful);
    }
    fs::create_dir_all(root).map_err(io_err(root))?;
    let tmp = tempfile::Builder::new().prefix(".tmp-episode-").tempdir_in(root).map_err(io_err(root))?;
    fs::create_dir(tmp.path().join(CAMERAS_DIR)).map_err(io_err(tmp.path()))?;
    fs::write(tmp.path().join(DATA_FILE), frames_json(frames)).map_err(io_err(tmp.path()))?;

    let base = episode_dir_name(stamp);
    for n in 0u32.. {
        let name = if n == 0 { base.clone() } else { format!("{base}_{n}") };
        let dest = root.join(&name);
        if dest.exists() {
            continue;
        }
        let mut meta = meta.clone();
        meta.episode_id = name;
        meta.total_frames = frames.len();
        fs::write(tmp.path().join(METADATA_FILE), metadata_json(&meta)).map_err(io_err(tmp.path()))?;
        match fs::rename(tmp.path(), &dest) {
            Ok(()) => {
                // The directory now lives at `dest`; keep TempDir from
                // deleting it.
                let _ = tmp.keep();
                return Ok(dest);
            }
            Err(_) if dest.exists() => continue,
            Err(e) => return Err(EpisodeError::Io { path: dest, source: e }),
        }
    }
    unreachable!("suffix space exhausted")
}

fn parse<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> Result<T, EpisodeError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| EpisodeError::Parse {
        file: file.to_string(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn read_file(dir: &Path, file: &str) -> Result<String, EpisodeError> {
    let path = dir.join(file);
    fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => EpisodeError::Missing { file: file.to_string() },
        _ => EpisodeError::Io { path, source: e },
    })
}

pub fn read_metadata(dir: &Path) -> Result<EpisodeMetadata, EpisodeError> {
    let text = read_file(dir, METADATA_FILE)?;
    let raw: serde_json::Value = parse(METADATA_FILE, &text)?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| EpisodeError::Parse {
        file: METADATA_FILE.into(),
        field: "format_version".into(),
        message: "missing or not an unsigned integer".into(),
    })?;
    if found != u64::from(EPISODE_FORMAT_VERSION) {
        return Err(EpisodeError::Version { file: METADATA_FILE.into(), found, expected: EPISODE_FORMAT_VERSION });
    }
    parse(METADATA_FILE, &text)
}

pub fn read_episode(dir: &Path) -> Result<(EpisodeMetadata, Vec<FrameData>), EpisodeError> {
    let meta = read_metadata(dir)?;
    let frames: Vec<FrameData> = parse(DATA_FILE, &read_file(dir, DATA_FILE)?)?;
    if frames.len() != meta.total_frames {
        return Err(EpisodeError::FrameCount { file: METADATA_FILE.into(), declared: meta.total_frames, actual: frames.len() });
    }
    Ok((meta, frames))
}

/// Episode directories directly under `root`, sorted by name.
pub fn list_episodes(root: &Path) -> Result<Vec<PathBuf>, EpisodeError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        if entry.path().is_dir() && name.to_string_lossy().starts_with("episode_") {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}
