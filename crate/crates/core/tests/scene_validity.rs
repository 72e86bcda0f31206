use playcollect_core::math::Aabb;
use playcollect_core::scene::{
    builtin_templates, generate, Catalog, Category, DifficultyConfig, Level, SceneInstance, TrashPose,
};

const EPS: f64 = 1e-9;

fn interiors_overlap(a: &Aabb, b: &Aabb) -> bool {
    a.min.x < b.max.x - EPS
        && b.min.x < a.max.x - EPS
        && a.min.y < b.max.y - EPS
        && b.min.y < a.max.y - EPS
        && a.min.z < b.max.z - EPS
        && b.min.z < a.max.z - EPS
}

/// Every violation found in a scene, as readable strings. Overlap and room
/// checks use the layout bounds (unscaled size), which contain the physical
/// bounds.
fn violations(s: &SceneInstance) -> Vec<String> {
    let mut out = Vec::new();
    for (i, a) in s.objects.iter().enumerate() {
        let ba = a.layout_aabb();
        if ba.min.x < s.room.min_x - EPS || ba.max.x > s.room.max_x + EPS || ba.min.z < s.room.min_z - EPS || ba.max.z > s.room.max_z + EPS {
            out.push(format!("object {} leaves the room", a.id));
        }
        for b in &s.objects[i + 1..] {
            if interiors_overlap(&ba, &b.layout_aabb()) {
                out.push(format!("objects {} and {} overlap", a.id, b.id));
            }
        }
        match a.category {
            Category::Trash => {
                let Some(t) = a.support.and_then(|id| s.object(id)) else {
                    out.push(format!("trash {} has no table", a.id));
                    continue;
                };
                if t.category != Category::Table {
                    out.push(format!("trash {} rests on a non-table", a.id));
                }
                if (ba.min.y - t.top_height()).abs() > 1e-9 {
                    out.push(format!("trash {} floats or sinks: {} vs {}", a.id, ba.min.y, t.top_height()));
                }
                let top = t.top_rect();
                let corners = [(ba.min.x, ba.min.z), (ba.max.x, ba.min.z), (ba.max.x, ba.max.z), (ba.min.x, ba.max.z)];
                if !corners.iter().all(|&(x, z)| top.contains(x, z)) {
                    out.push(format!("trash {} overhangs its table", a.id));
                }
                if a.pose != Some(s.difficulty.trash_pose) {
                    out.push(format!("trash {} pose tag {:?}", a.id, a.pose));
                }
            }
            _ => {
                if a.aabb().min.y.abs() > 1e-9 {
                    out.push(format!("object {} is not on the floor", a.id));
                }
            }
        }
    }
    let bins = s.objects.iter().filter(|o| o.category == Category::TrashBin).count();
    if bins == 0 || s.goal_triggers.len() != bins {
        out.push("bins and triggers disagree".into());
    }
    for t in &s.goal_triggers {
        let bin = s.object(t.bin_id).expect("trigger names a bin").aabb();
        if t.volume.min.x < bin.min.x - EPS || t.volume.max.x > bin.max.x + EPS || t.volume.max.y > bin.max.y + EPS {
            out.push(format!("trigger of bin {} sticks out", t.bin_id));
        }
    }
    out
}

#[test]
fn three_hundred_seeds_per_level_are_valid() {
    let lib = builtin_templates();
    let cat = Catalog::builtin();
    for d in [DifficultyConfig::easy(), DifficultyConfig::hard()] {
        for seed in 0..300 {
            let s = generate(&lib, &cat, &d, seed).unwrap();
            let v = violations(&s);
            assert!(v.is_empty(), "{:?} seed {seed}: {v:?}", d.level);
            assert!((1..=5).contains(&s.trash_count()));
        }
    }
}

#[test]
fn hard_scenes_tag_lying_trash_and_shrink_bins() {
    let lib = builtin_templates();
    let cat = Catalog::builtin();
    for seed in 0..20 {
        let e = generate(&lib, &cat, &DifficultyConfig::easy(), seed).unwrap();
        let h = generate(&lib, &cat, &DifficultyConfig::hard(), seed).unwrap();
        assert!(h.trash().all(|t| t.pose == Some(TrashPose::Lying)));
        assert!(e.trash().all(|t| t.pose == Some(TrashPose::Upright)));
        let vol = |s: &SceneInstance| s.goal_triggers.iter().map(|t| {
            let h = t.volume.half_extents();
            h.x * h.y * h.z
        }).sum::<f64>();
        assert!(vol(&h) < vol(&e));
        assert_eq!(h.difficulty.level, Level::Hard);
    }
}

#[test]
fn fixed_seed_is_byte_identical() {
    let lib = builtin_templates();
    let cat = Catalog::builtin();
    for seed in [0, 7, 123_456_789, u64::MAX] {
        let a = generate(&lib, &cat, &DifficultyConfig::hard(), seed).unwrap().to_json();
        let b = generate(&lib, &cat, &DifficultyConfig::hard(), seed).unwrap().to_json();
        assert_eq!(a, b);
        assert_eq!(SceneInstance::from_json(&a).unwrap().to_json(), a);
    }
}
