use std::f64::consts::{FRAC_PI_2, TAU};

use super::{
    Catalog, Category, DifficultyConfig, GoalTrigger, ObjectSpec, PlacedObject, RoomTemplate, SceneError,
    SceneInstance, TrashPose, SCENE_FORMAT_VERSION,
};
use crate::math::{raycast_down, Aabb, Quat, Rect, Surface, Vec3};
use crate::rng::RngStream;

pub const DEFAULT_RETRY_BUDGET: u32 = 50;

/// Half side of the square kept clear around the robot's start position.
const ROBOT_KEEP_OUT: f64 = 0.45;
/// Bin wall thickness at scale 1; the goal trigger is the inner volume.
const BIN_WALL: f64 = 0.02;
/// Linear fraction of the table top, per axis, that trash is scattered in.
const TRASH_SCATTER_FRACTION: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub retry_budget: u32,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { retry_budget: DEFAULT_RETRY_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// The downward ray found no surface.
    OutOfRoom,
    /// Collides with an already placed object (or rests on one when it
    /// must stand on the floor).
    Overlap,
    /// Footprint is not fully inside the spawn region.
    OutOfBounds,
}

/// Where a candidate is allowed to rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportRule {
    Floor,
    TableTop(u32),
}

#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub spec: &'a ObjectSpec,
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
    pub orientation: Quat,
}

impl Candidate<'_> {
    fn half_height(&self) -> f64 {
        Aabb::of_rotated_box(Vec3::ZERO, self.spec.half_extents(), self.orientation).half_extents().y
    }

    fn center_at(&self, base: f64) -> Vec3 {
        Vec3::new(self.x, base + self.half_height(), self.z)
    }

    fn layout_aabb(&self, base: f64) -> Aabb {
        Aabb::of_rotated_box(self.center_at(base), self.spec.half_extents(), self.orientation)
    }
}

pub type Placement = Result<f64, Rejection>;

/// Runs the three validity filters in order: downward ray-cast for the
/// support height, overlap against everything placed so far, then the
/// boundary check against `area`. Returns the resolved base height.
pub fn validate_placement(
    candidate: &Candidate<'_>,
    placed: &[PlacedObject],
    surfaces: &[Surface],
    reserved: &[Aabb],
    area: &Rect,
    support: SupportRule,
) -> Placement {
    let height = raycast_down(candidate.x, candidate.z, surfaces).ok_or(Rejection::OutOfRoom)?;
    match support {
        // Anything hit above the floor means the footprint sits on another object.
        SupportRule::Floor if height > 0.0 => return Err(Rejection::Overlap),
        SupportRule::TableTop(id) => {
            let on_table = surfaces.iter().any(|s| {
                s.owner == Some(id) && s.height == height && s.rect.contains(candidate.x, candidate.z)
            });
            if !on_table {
                return Err(Rejection::OutOfBounds);
            }
        }
        SupportRule::Floor => {}
    }

    let bounds = candidate.layout_aabb(height);
    if placed.iter().any(|o| o.layout_aabb().overlaps(&bounds)) || reserved.iter().any(|r| r.overlaps(&bounds)) {
        return Err(Rejection::Overlap);
    }

    let footprint = Rect::axis_aligned(bounds.min.x, bounds.min.z, bounds.max.x, bounds.max.z);
    if !area.contains_rect(&footprint) {
        return Err(Rejection::OutOfBounds);
    }
    Ok(height)
}

/// Uniform choice from a non-empty library.
pub fn select_template<'a>(library: &'a [RoomTemplate], rng: &mut RngStream) -> Result<&'a RoomTemplate, SceneError> {
    if library.is_empty() {
        return Err(SceneError::EmptyLibrary);
    }
    Ok(&library[rng.index(library.len())])
}

fn floor_surface(template: &RoomTemplate) -> Surface {
    Surface { rect: template.bounds.rect(), height: 0.0, owner: None }
}

/// Populates `template` in stage order: bins, tables, furniture,
/// decorations, then trash on the table tops.
///
/// Each object samples up to `retry_budget` candidate poses; objects that
/// never pass validation are skipped. A scene without a bin or a table is
/// an error.
pub fn populate_scene(
    template: &RoomTemplate,
    catalog: &Catalog,
    difficulty: &DifficultyConfig,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<SceneInstance, SceneError> {
    template.validate()?;
    difficulty.validate().map_err(|reason| SceneError::InvalidTemplate { id: template.id.clone(), reason })?;
    let budget = opts.retry_budget.max(1);

    let root = RngStream::new(seed, "scene");
    let mut layout = root.derive("layout");

    let mut surfaces = vec![floor_surface(template)];
    let mut objects: Vec<PlacedObject> = Vec::new();
    let start = template.robot_start;
    let reserved = [Aabb::new(
        Vec3::new(start.x - ROBOT_KEEP_OUT, 0.0, start.z - ROBOT_KEEP_OUT),
        Vec3::new(start.x + ROBOT_KEEP_OUT, 2.5, start.z + ROBOT_KEEP_OUT),
    )];
    let mut capacity: Vec<u32> = template.spawn_areas.iter().map(|a| a.max_objects).collect();

    for cat in [Category::TrashBin, Category::Table, Category::Furniture, Category::Decoration] {
        let items = catalog.of_category(cat, &template.catalog);
        if items.is_empty() {
            return Err(SceneError::EmptyCategory(cat));
        }
        for (ai, area) in template.spawn_areas.iter().enumerate() {
            if !area.admits(cat) || capacity[ai] == 0 {
                continue;
            }
            let wanted = match cat {
                Category::TrashBin | Category::Table => 1,
                _ => layout.range_inclusive(0, capacity[ai]),
            };
            let rect = area.bounds.rect();
            for _ in 0..wanted {
                let spec = items[layout.index(items.len())];
                for _ in 0..budget {
                    let x = layout.uniform(rect.center_x - rect.half_x, rect.center_x + rect.half_x);
                    let z = layout.uniform(rect.center_z - rect.half_z, rect.center_z + rect.half_z);
                    let yaw = layout.uniform(0.0, TAU);
                    let cand = Candidate { spec, x, z, yaw, orientation: Quat::from_yaw(yaw) };
                    let Ok(height) = validate_placement(&cand, &objects, &surfaces, &reserved, &rect, SupportRule::Floor)
                    else {
                        continue;
                    };
                    let id = objects.len() as u32;
                    let scale = if cat == Category::TrashBin { difficulty.bin_scale } else { 1.0 };
                    let position = cand.center_at(height);
                    // Bins shrink about their footprint center, resting on the floor.
                    let position = Vec3::new(position.x, height + 0.5 * spec.height * scale, position.z);
                    let obj = PlacedObject {
                        id,
                        name: spec.name.clone(),
                        category: cat,
                        size: Vec3::new(spec.width, spec.height, spec.depth),
                        scale,
                        position,
                        yaw,
                        orientation: cand.orientation,
                        pose: None,
                        interactable: false,
                        area: Some(ai),
                        support: None,
                    };
                    if cat == Category::Table || cat == Category::Furniture {
                        surfaces.push(Surface { rect: obj.top_rect(), height: obj.top_height(), owner: Some(id) });
                    }
                    objects.push(obj);
                    capacity[ai] -= 1;
                    break;
                }
            }
        }
        let placed_any = objects.iter().any(|o| o.category == cat);
        match cat {
            Category::TrashBin if !placed_any => return Err(SceneError::NoBinPlaced(template.id.clone())),
            Category::Table if !placed_any => return Err(SceneError::NoTablePlaced(template.id.clone())),
            _ => {}
        }
    }

    // Trash: count, then a table per item, then per-table scatter.
    let [lo, hi] = difficulty.trash_count_range;
    let count = root.derive("trash/count").range_inclusive(lo, hi);
    let tables: Vec<PlacedObject> = objects.iter().filter(|o| o.category == Category::Table).cloned().collect();
    let mut per_table = vec![0u32; tables.len()];
    let mut assign = root.derive("trash/assign");
    for _ in 0..count {
        per_table[assign.index(tables.len())] += 1;
    }
    let trash_items = catalog.of_category(Category::Trash, &template.catalog);
    if trash_items.is_empty() {
        return Err(SceneError::EmptyCategory(Category::Trash));
    }
    // Items that do not fit on their table spill over to the following tables.
    let mut spill = 0u32;
    for pass in 0..2 {
        for (ti, table) in tables.iter().enumerate() {
            let n = if pass == 0 { per_table[ti] + std::mem::take(&mut spill) } else { std::mem::take(&mut spill) };
            if n == 0 {
                continue;
            }
            let mut rng = root.derive(&format!("trash/table{}/pass{pass}", table.id));
            match scatter_trash(table, n, difficulty, &trash_items, &mut rng, &objects, &surfaces, budget) {
                Ok(placed) => {
                    spill = n - placed.len() as u32;
                    objects.extend(placed);
                }
                Err(SceneError::TrashPlacement { .. }) => spill = n,
                Err(e) => return Err(e),
            }
        }
    }
    if !objects.iter().any(|o| o.category == Category::Trash) {
        return Err(SceneError::TrashPlacement { table: tables[0].id });
    }

    let goal_triggers = objects
        .iter()
        .filter(|o| o.category == Category::TrashBin)
        .map(|bin| {
            let inner = 0.5 * bin.size.x.min(bin.size.z) - BIN_WALL;
            let half_xz = inner * bin.scale;
            let base = bin.base_height();
            GoalTrigger {
                bin_id: bin.id,
                volume: Aabb::new(
                    Vec3::new(bin.position.x - half_xz, base, bin.position.z - half_xz),
                    Vec3::new(bin.position.x + half_xz, base + bin.size.y * bin.scale, bin.position.z + half_xz),
                ),
            }
        })
        .collect();

    Ok(SceneInstance {
        format_version: SCENE_FORMAT_VERSION,
        template_id: template.id.clone(),
        seed,
        difficulty: difficulty.clone(),
        room: template.bounds,
        robot_start: template.robot_start,
        objects,
        surfaces,
        goal_triggers,
    })
}

/// Scatters `count` trash items uniformly over the central half (per axis)
/// of `table`'s top. Upright trash only gets a random yaw; lying trash is
/// tipped 90 degrees about a random horizontal axis.
///
/// Items that find no overlap-free spot within the budget are dropped, as
/// long as at least one lands.
#[allow(clippy::too_many_arguments)]
pub fn scatter_trash(
    table: &PlacedObject,
    count: u32,
    difficulty: &DifficultyConfig,
    items: &[&ObjectSpec],
    rng: &mut RngStream,
    placed: &[PlacedObject],
    surfaces: &[Surface],
    retry_budget: u32,
) -> Result<Vec<PlacedObject>, SceneError> {
    let top = table.top_rect();
    let region = top.scaled(TRASH_SCATTER_FRACTION);
    let mut all: Vec<PlacedObject> = placed.to_vec();
    let mut out = Vec::new();
    let first_id = placed.iter().map(|o| o.id + 1).max().unwrap_or(0);

    for _ in 0..count {
        let spec = items[rng.index(items.len())];
        for _ in 0..retry_budget.max(1) {
            let lx = rng.uniform(-region.half_x, region.half_x);
            let lz = rng.uniform(-region.half_z, region.half_z);
            let (x, z) = region.to_world(lx, lz);
            let yaw = rng.uniform(0.0, TAU);
            let orientation = match difficulty.trash_pose {
                TrashPose::Upright => Quat::from_yaw(yaw),
                TrashPose::Lying => Quat::from_yaw(yaw) * Quat::from_axis_angle(Vec3::X, FRAC_PI_2),
            };
            let cand = Candidate { spec, x, z, yaw, orientation };
            let Ok(height) = validate_placement(&cand, &all, surfaces, &[], &top, SupportRule::TableTop(table.id)) else {
                continue;
            };
            let obj = PlacedObject {
                id: first_id + out.len() as u32,
                name: spec.name.clone(),
                category: Category::Trash,
                size: Vec3::new(spec.width, spec.height, spec.depth),
                scale: 1.0,
                position: cand.center_at(height),
                yaw,
                orientation,
                pose: Some(difficulty.trash_pose),
                interactable: true,
                area: None,
                support: Some(table.id),
            };
            all.push(obj.clone());
            out.push(obj);
            break;
        }
    }
    if out.is_empty() {
        return Err(SceneError::TrashPlacement { table: table.id });
    }
    Ok(out)
}
