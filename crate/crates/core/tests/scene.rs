use larg::geom::{Quat as QuatT, Vec3 as Vec3T};
use larg::scene::*;
use larg::{Pose, Quat, Vec3};
use proptest::prelude::*;
use serde_json::json;

#[test]
fn catalog_has_both_families() {
    let c = task_catalog();
    assert_eq!(c.len(), 41);
    let ids = |f: Family| -> Vec<String> { c.iter().filter(|t| t.family == f).map(|t| t.id.clone()).collect() };
    assert_eq!(ids(Family::GoalGcrl), (1..=32).map(|i| format!("d{i:02}")).collect::<Vec<_>>());
    assert_eq!(ids(Family::RewardMtrl), (1..=9).map(|i| format!("m{i:02}")).collect::<Vec<_>>());
    assert_eq!(find_task("d01").unwrap().description, "Move a cube to the top right corner of the table.");
    assert_eq!(find_task("d30").unwrap().n_objects, 3);
    assert!(find_task("d33").is_none());
}

#[test]
fn default_manifest_layout() {
    let m = default_manifest();
    assert_eq!(m.cubes.len(), 3);
    assert_eq!(m.rest_z(), 0.805);
    assert_eq!(m.table_center(), Vec3::new(0.5, 0.5, 0.805));
    assert!(m.check().is_ok());
    assert_eq!(m.for_task(find_task("d01").unwrap()).cubes.len(), 1);
    assert_eq!(m.for_task(find_task("d30").unwrap()).cubes.len(), 3);
}

#[test]
fn manifest_round_trips_through_toml() {
    let m = default_manifest();
    assert_eq!(load_manifest(&m.to_toml()).unwrap(), m);
}

#[test]
fn manifest_invariants() {
    let dup = DEFAULT_MANIFEST_TOML.replace("id = \"cube2\"", "id = \"cube1\"");
    assert!(matches!(load_manifest(&dup), Err(ManifestError::Invariant(m)) if m.contains("duplicate cube id")));
    let off = DEFAULT_MANIFEST_TOML.replace("position = [0.3, 0.6, 0.805]", "position = [1.3, 0.6, 0.805]");
    assert!(matches!(load_manifest(&off), Err(ManifestError::Invariant(_))));
    assert!(matches!(load_manifest("table_height = 0.78"), Err(ManifestError::Parse(_))));
}

#[test]
fn workspace_membership() {
    let m = default_manifest();
    let b = m.workspace;
    assert!(within_workspace(&Pose::at(Vec3::new(0.5, 0.5, 0.805)), &m, &b));
    assert!(!within_workspace(&Pose::at(Vec3::new(1.5, 0.5, 0.805)), &m, &b));
    assert!(!within_workspace(&Pose::at(Vec3::new(0.5, 0.5, 1.5)), &m, &b));
    // inside the base exclusion radius
    assert!(!within_workspace(&Pose::at(Vec3::new(0.5, 0.2, 0.805)), &m, &b));
    // 3-4-5 triangle: 0.3 right of the table, 0.4 beyond the far edge
    assert!((m.distance_outside_footprint(Vec3::new(1.3, 1.4, 0.8)) - 0.5).abs() < 1e-12);
    assert_eq!(m.distance_outside_footprint(Vec3::new(0.2, 0.9, 0.8)), 0.0);
}

#[test]
fn goal_set_json_forms() {
    let bare = GoalSet::from_json(&json!([0.5, 0.5, 0.93]), 1).unwrap();
    assert_eq!(bare.targets[0], Pose::at(Vec3::new(0.5, 0.5, 0.93)));
    let full = GoalSet::from_json(&json!([[0.5, 0.5, 0.93, 0.0, 1.0, 0.0, 0.0]]), 1).unwrap();
    assert_eq!(full.targets[0].orientation, Quat::new(0.0, 1.0, 0.0, 0.0));
    assert_eq!(GoalSet::from_json(&full.to_json(), 1).unwrap(), full);
    assert!(GoalSet::from_json(&json!([[0.5, 0.5, 0.93]]), 2).unwrap_err().contains("expected 2"));
    assert!(GoalSet::from_json(&json!("up"), 1).is_err());
    assert!(GoalSet::from_json(&json!([["a", 1, 2]]), 1).is_err());
}

#[test]
fn scalar_generic_geometry() {
    let a = Vec3T::<f32>::new(0.0, 0.0, 0.0);
    let b = Vec3T::<f32>::new(3.0, 4.0, 0.0);
    assert_eq!(a.dist(b), 5.0);
    assert_eq!(a.step_toward(b, 1.0), Vec3T::new(0.6, 0.8, 0.0));
    let q = QuatT::<f32>::from_axis_angle(Vec3T::new(0.0, 0.0, 1.0), std::f32::consts::FRAC_PI_2);
    let r = q.rotate(Vec3T::new(1.0, 0.0, 0.0));
    assert!((r.y - 1.0).abs() < 1e-6 && r.x.abs() < 1e-6);
}

proptest! {
    #[test]
    fn jitter_is_bounded_seeded_and_keeps_cubes_on_the_table(seed in any::<u64>(), amount in 0.0f64..0.3) {
        let m = default_manifest();
        let j = m.with_jitter(seed, amount);
        prop_assert_eq!(&j, &m.with_jitter(seed, amount));
        for (a, b) in m.cubes.iter().zip(&j.cubes) {
            prop_assert!((a.initial.position.x - b.initial.position.x).abs() <= amount + 1e-12);
            prop_assert!((a.initial.position.y - b.initial.position.y).abs() <= amount + 1e-12);
            prop_assert_eq!(a.initial.position.z, b.initial.position.z);
            prop_assert!(j.on_footprint(b.initial.position));
        }
    }
}
