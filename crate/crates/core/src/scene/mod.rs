//! Room templates, the object catalog and generated scene instances.
//!
//! Templates and scenes are JSON. See `docs/formats.md` for the schemas.

mod generate;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::math::{Aabb, Quat, Rect, Surface, Vec3};
use crate::rng::RngStream;

pub use generate::{
    populate_scene, scatter_trash, select_template, validate_placement, Candidate, GenerateOptions,
    Placement, Rejection, SupportRule, DEFAULT_RETRY_BUDGET,
};

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("template library is empty")]
    EmptyLibrary,
    #[error("invalid template `{id}`: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("catalog has no item of category {0}")]
    EmptyCategory(Category),
    #[error("no trash bin could be placed in template `{0}`")]
    NoBinPlaced(String),
    #[error("no table could be placed in template `{0}`")]
    NoTablePlaced(String),
    #[error("could not place any trash on table {table}")]
    TrashPlacement { table: u32 },
    #[error("unsupported {what} format version {found} (expected {expected})")]
    Version { what: &'static str, found: u32, expected: u32 },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed json in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// Object categories, declared in placement stage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TrashBin,
    Table,
    Furniture,
    Decoration,
    Trash,
}

impl Category {
    /// Placement stages. Trash is scattered last, onto table tops.
    pub const STAGES: [Category; 5] = [
        Category::TrashBin,
        Category::Table,
        Category::Furniture,
        Category::Decoration,
        Category::Trash,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::TrashBin => "trash_bin",
            Category::Table => "table",
            Category::Furniture => "furniture",
            Category::Decoration => "decoration",
            Category::Trash => "trash",
        }
    }

    pub fn stage_index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub category: Category,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    #[serde(default)]
    pub table_top: bool,
}

impl ObjectSpec {
    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(self.width * 0.5, self.height * 0.5, self.depth * 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub format_version: u32,
    pub items: Vec<ObjectSpec>,
}

impl Catalog {
    pub fn builtin() -> Catalog {
        serde_json::from_str(include_str!("../../assets/catalog.json")).expect("bundled catalog parses")
    }

    pub fn of_category<'a>(&'a self, cat: Category, allowed: &'a [String]) -> Vec<&'a ObjectSpec> {
        self.items
            .iter()
            .filter(|s| s.category == cat)
            .filter(|s| allowed.is_empty() || allowed.iter().any(|a| a == &s.name))
            .collect()
    }
}

/// Axis-aligned bounds as they appear in template files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds2 {
    pub min_x: f64,
    pub min_z: f64,
    pub max_x: f64,
    pub max_z: f64,
}

impl Bounds2 {
    pub fn rect(&self) -> Rect {
        Rect::axis_aligned(self.min_x, self.min_z, self.max_x, self.max_z)
    }

    pub fn contains(&self, o: &Bounds2) -> bool {
        o.min_x >= self.min_x && o.max_x <= self.max_x && o.min_z >= self.min_z && o.max_z <= self.max_z
    }

    pub fn is_valid(&self) -> bool {
        self.min_x < self.max_x && self.min_z < self.max_z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    pub bounds: Bounds2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnArea {
    #[serde(default)]
    pub zone: Option<String>,
    pub bounds: Bounds2,
    pub object_types: BTreeSet<Category>,
    pub max_objects: u32,
}

impl SpawnArea {
    pub fn admits(&self, cat: Category) -> bool {
        self.object_types.contains(&cat)
    }
}

/// Planar robot base pose: position on the floor and heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomTemplate {
    pub format_version: u32,
    pub id: String,
    pub bounds: Bounds2,
    #[serde(default)]
    pub zones: Vec<Zone>,
    pub robot_start: BasePose,
    pub spawn_areas: Vec<SpawnArea>,
    /// Catalog item names this template may use; empty means all.
    #[serde(default)]
    pub catalog: Vec<String>,
}

impl RoomTemplate {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidTemplate { id: self.id.clone(), reason: reason.to_string() };
        if self.format_version != TEMPLATE_FORMAT_VERSION {
            return Err(SceneError::Version {
                what: "template",
                found: self.format_version,
                expected: TEMPLATE_FORMAT_VERSION,
            });
        }
        if !self.bounds.is_valid() {
            return Err(bad("room bounds are empty"));
        }
        for (i, a) in self.spawn_areas.iter().enumerate() {
            if !a.bounds.is_valid() {
                return Err(bad(&format!("spawn area {i} is empty")));
            }
            if !self.bounds.contains(&a.bounds) {
                return Err(bad(&format!("spawn area {i} leaves the room")));
            }
            if a.object_types.contains(&Category::Trash) {
                return Err(bad(&format!("spawn area {i} lists trash; trash only goes on tables")));
            }
        }
        if !self.spawn_areas.iter().any(|a| a.admits(Category::Table) && a.max_objects > 0) {
            return Err(bad("no spawn area admits tables"));
        }
        if !self.spawn_areas.iter().any(|a| a.admits(Category::TrashBin) && a.max_objects > 0) {
            return Err(bad("no spawn area admits trash bins"));
        }
        if !self.bounds.rect().contains(self.robot_start.x, self.robot_start.z) {
            return Err(bad("robot start is outside the room"));
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &str) -> Result<RoomTemplate, SceneError> {
        let t: RoomTemplate =
            serde_json::from_str(text).map_err(|source| SceneError::Json { path: path.to_string(), source })?;
        t.validate()?;
        Ok(t)
    }
}

/// The bundled template library.
pub fn builtin_templates() -> Vec<RoomTemplate> {
    const FILES: [(&str, &str); 4] = [
        ("apartment_open_plan.json", include_str!("../../assets/templates/apartment_open_plan.json")),
        ("family_room.json", include_str!("../../assets/templates/family_room.json")),
        ("kitchen_diner.json", include_str!("../../assets/templates/kitchen_diner.json")),
        ("studio_office.json", include_str!("../../assets/templates/studio_office.json")),
    ];
    FILES
        .iter()
        .map(|(name, text)| RoomTemplate::from_json(text, name).expect("bundled template is valid"))
        .collect()
}

/// Loads every `*.json` in `dir`, ordered by file name.
pub fn load_templates(dir: &Path) -> Result<Vec<RoomTemplate>, SceneError> {
    let io = |source| SceneError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(&p)
            .map_err(|source| SceneError::Io { path: p.display().to_string(), source })?;
        out.push(RoomTemplate::from_json(&text, &p.display().to_string())?);
    }
    if out.is_empty() {
        return Err(SceneError::EmptyLibrary);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Easy,
    Hard,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Easy => "easy",
            Level::Hard => "hard",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown difficulty `{0}` (expected easy or hard)")]
pub struct BadDifficulty(pub String);

impl FromStr for Level {
    type Err = BadDifficulty;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Level::Easy),
            "hard" => Ok(Level::Hard),
            _ => Err(BadDifficulty(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrashPose {
    Upright,
    Lying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyConfig {
    pub level: Level,
    pub trash_pose: TrashPose,
    pub bin_scale: f64,
    pub trash_count_range: [u32; 2],
}

impl DifficultyConfig {
    pub const DEFAULT_HARD_BIN_SCALE: f64 = 0.6;

    pub fn easy() -> Self {
        DifficultyConfig { level: Level::Easy, trash_pose: TrashPose::Upright, bin_scale: 1.0, trash_count_range: [1, 5] }
    }

    pub fn hard() -> Self {
        DifficultyConfig {
            level: Level::Hard,
            trash_pose: TrashPose::Lying,
            bin_scale: Self::DEFAULT_HARD_BIN_SCALE,
            trash_count_range: [1, 5],
        }
    }

    pub fn for_level(level: Level) -> Self {
        match level {
            Level::Easy => Self::easy(),
            Level::Hard => Self::hard(),
        }
    }

    pub fn with_trash_range(mut self, lo: u32, hi: u32) -> Self {
        self.trash_count_range = [lo, hi];
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.trash_count_range;
        if lo < 1 || lo > hi {
            return Err(format!("trash count range [{lo}, {hi}] must satisfy 1 <= min <= max"));
        }
        if !(self.bin_scale > 0.0 && self.bin_scale <= 1.0) {
            return Err(format!("bin scale {} must be in (0, 1]", self.bin_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub id: u32,
    pub name: String,
    pub category: Category,
    /// Catalog dimensions `(width, height, depth)` before scaling.
    pub size: Vec3,
    pub scale: f64,
    /// Geometric center in world coordinates.
    pub position: Vec3,
    pub yaw: f64,
    pub orientation: Quat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<TrashPose>,
    pub interactable: bool,
    /// Spawn area index for floor objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<usize>,
    /// Supporting table id for trash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<u32>,
}

impl PlacedObject {
    /// Bounds used for layout. Bins reserve their unscaled footprint so the
    /// layout does not depend on the difficulty's bin scale.
    pub fn layout_aabb(&self) -> Aabb {
        Aabb::of_rotated_box(self.position, self.size * 0.5, self.orientation)
    }

    /// Physical bounds after scaling.
    pub fn aabb(&self) -> Aabb {
        Aabb::of_rotated_box(self.position, self.size * (0.5 * self.scale), self.orientation)
    }

    pub fn base_height(&self) -> f64 {
        self.aabb().min.y
    }

    /// Top rectangle for table-top objects.
    pub fn top_rect(&self) -> Rect {
        Rect {
            center_x: self.position.x,
            center_z: self.position.z,
            half_x: 0.5 * self.size.x * self.scale,
            half_z: 0.5 * self.size.z * self.scale,
            yaw: self.yaw,
        }
    }

    pub fn top_height(&self) -> f64 {
        self.aabb().max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTrigger {
    pub bin_id: u32,
    pub volume: Aabb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    pub format_version: u32,
    pub template_id: String,
    pub seed: u64,
    pub difficulty: DifficultyConfig,
    pub room: Bounds2,
    pub robot_start: BasePose,
    pub objects: Vec<PlacedObject>,
    pub surfaces: Vec<Surface>,
    pub goal_triggers: Vec<GoalTrigger>,
}

impl SceneInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<SceneInstance, SceneError> {
        let s: SceneInstance =
            serde_json::from_str(text).map_err(|source| SceneError::Json { path: "scene".into(), source })?;
        if s.format_version != SCENE_FORMAT_VERSION {
            return Err(SceneError::Version { what: "scene", found: s.format_version, expected: SCENE_FORMAT_VERSION });
        }
        Ok(s)
    }

    pub fn trash(&self) -> impl Iterator<Item = &PlacedObject> {
        self.objects.iter().filter(|o| o.category == Category::Trash)
    }

    pub fn object(&self, id: u32) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn trash_count(&self) -> usize {
        self.trash().count()
    }
}

/// Convenience: pick a template and populate it for `seed`.
pub fn generate(
    library: &[RoomTemplate],
    catalog: &Catalog,
    difficulty: &DifficultyConfig,
    seed: u64,
) -> Result<SceneInstance, SceneError> {
    let mut pick = RngStream::new(seed, "scene/template");
    let template = select_template(library, &mut pick)?;
    populate_scene(template, catalog, difficulty, seed, &GenerateOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_assets_are_valid() {
        let lib = builtin_templates();
        assert!(lib.len() >= 3);
        let cat = Catalog::builtin();
        for c in Category::STAGES {
            assert!(!cat.of_category(c, &[]).is_empty(), "{c}");
        }
    }

    #[test]
    fn difficulty_parsing() {
        assert_eq!("Easy".parse::<Level>(), Ok(Level::Easy));
        assert_eq!("hard".parse::<Level>(), Ok(Level::Hard));
        assert!("Bogus".parse::<Level>().is_err());
    }

    #[test]
    fn difficulty_validation() {
        assert!(DifficultyConfig::easy().validate().is_ok());
        assert!(DifficultyConfig::easy().with_trash_range(0, 3).validate().is_err());
        assert!(DifficultyConfig::easy().with_trash_range(4, 3).validate().is_err());
        let mut d = DifficultyConfig::hard();
        d.bin_scale = 1.2;
        assert!(d.validate().is_err());
    }

    #[test]
    fn template_rejects_area_outside_room() {
        let mut t = builtin_templates().remove(0);
        t.spawn_areas[0].bounds.max_x = t.bounds.max_x + 1.0;
        assert!(matches!(t.validate(), Err(SceneError::InvalidTemplate { .. })));
    }

    #[test]
    fn template_requires_table_and_bin_areas() {
        let mut t = builtin_templates().remove(0);
        t.spawn_areas.retain(|a| !a.admits(Category::TrashBin));
        assert!(t.validate().is_err());
    }
}
