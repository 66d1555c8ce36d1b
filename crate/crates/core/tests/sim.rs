use std::collections::BTreeMap;

use larg::reward::{GoalTerm, Independent, RewardBreakdown, RewardError, RewardScales, StepContext};
use larg::scene::{default_manifest, find_task, task_catalog, GoalSet};
use larg::sim::*;
use larg::validator::oracle_goal;
use larg::{Pose, Vec3};
use proptest::prelude::*;

/// Steps of a straight leg that ends once within the grasp tolerance.
fn steps_for(d: f64) -> usize {
    ((d - GRASP_TOL) / STEP_SIZE - 1e-9).ceil().max(0.0) as usize
}

/// Position after `k` straight steps from `a` toward `b`.
fn advance(a: Vec3, b: Vec3, k: usize) -> Vec3 {
    let d = a.dist(b);
    let s = (k as f64 * STEP_SIZE).min(d);
    if d == 0.0 { a } else { a + (b - a) * (s / d) }
}

#[test]
fn goal_at_initial_pose_succeeds_quickly() {
    let m = default_manifest().for_task(find_task("d01").unwrap());
    let g = GoalSet::new(vec![m.cubes[0].initial]);
    let mut r = native_reward(find_task("d01").unwrap(), RewardScales::default());
    let res = rollout(&m, &g, &mut r, &SimParams::default()).unwrap();
    assert!(res.success);
    let home = SimParams::default().gripper_home;
    assert_eq!(res.steps_used, steps_for(home.dist(m.cubes[0].initial.position)));
    assert_eq!(res.reward_trace.len(), res.steps_used);
    let max = res.reward_trace.iter().map(|b| b.goal_shaping).fold(f64::MIN, f64::max);
    assert_eq!(res.reward_trace[0].goal_shaping, max);
    assert_eq!(res.reward_trace[0].goal_shaping, RewardScales::<f64>::default().goal_dist);
}

#[test]
fn oracle_d05_step_count_matches_path_length() {
    let t = find_task("d05").unwrap();
    let m = default_manifest().for_task(t);
    let g = oracle_goal(t, &m, 3).unwrap();
    assert!((g.targets[0].position.z - 0.93).abs() < 1e-9);
    let res = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
    let home = SimParams::default().gripper_home;
    let cube = m.cubes[0].initial.position;
    let approach = steps_for(home.dist(cube));
    let grasped_at = advance(home, cube, approach);
    let expected = approach + steps_for(grasped_at.dist(g.targets[0].position));
    assert!(res.success);
    assert_eq!(res.steps_used, expected);
    assert!(res.steps_used <= EPISODE_CAP);
    // lifted to 15 cm above the table: lift bonus active at the end
    assert_eq!(res.reward_trace.last().unwrap().lift, 4.0);
}

#[test]
fn unreachable_goal_fails_at_the_cap() {
    let t = find_task("d01").unwrap();
    let m = default_manifest().for_task(t);
    let g = GoalSet::new(vec![Pose::at(Vec3::new(1.5, 0.9, 0.805))]);
    let res = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
    assert!(!res.success);
    assert_eq!(res.steps_used, 500);
    assert_eq!(res.reward_trace.len(), 500);
}

#[test]
fn flip_is_applied_at_release() {
    let t = find_task("d06").unwrap();
    let m = default_manifest().for_task(t);
    let g = oracle_goal(t, &m, 0).unwrap();
    let res = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
    assert!(res.success);
    assert_eq!(res.final_state.cube_poses[0].orientation, g.targets[0].orientation);
    // the orientation penalty applies until the cube is released flipped
    let last = res.reward_trace.last().unwrap();
    assert!(res.reward_trace[0].goal_shaping < last.goal_shaping);
}

#[test]
fn off_table_target_is_reached() {
    let t = find_task("d13").unwrap();
    let m = default_manifest().for_task(t);
    let g = oracle_goal(t, &m, 0).unwrap();
    assert!(!m.on_footprint(g.targets[0].position));
    let res = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
    assert!(res.success);
}

#[test]
fn held_cube_tracks_gripper() {
    let t = find_task("d29").unwrap();
    let m = default_manifest().for_task(t);
    let g = oracle_goal(t, &m, 1).unwrap();
    let mut seen = Vec::new();
    let mut probe = |ctx: &StepContext<f64>| -> Result<RewardBreakdown<f64>, RewardError> {
        seen.push((ctx.object_pose.position, ctx.gripper_position, ctx.action[6]));
        Ok(RewardBreakdown::zero())
    };
    let res = rollout(&m, &g, &mut probe, &SimParams::default()).unwrap();
    assert!(res.success);
    assert_eq!(seen.len(), 3 * res.steps_used);
    for (k, step) in res.steps.iter().enumerate() {
        if let Some(h) = step.holding {
            let (obj, grip, grasp) = seen[3 * k + h];
            assert_eq!(obj, grip);
            assert_eq!(grasp, 1.0);
        }
    }
}

#[test]
fn rollout_is_deterministic() {
    let t = find_task("d30").unwrap();
    let m = default_manifest().with_jitter(11, 0.05).for_task(t);
    let g = oracle_goal(t, &m, 11).unwrap();
    let a = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
    let b = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn success_implies_goal_bonus_for_every_object() {
    let scales = RewardScales::<f64>::default();
    for t in task_catalog() {
        for seed in 0..3 {
            let m = default_manifest().with_jitter(seed, 0.05).for_task(t);
            let g = oracle_goal(t, &m, seed).unwrap();
            let mut bonus_only = GoalTerm::new(scales, false);
            let res = rollout(&m, &g, &mut bonus_only, &SimParams::default()).unwrap();
            assert!(res.success, "{} seed {seed}", t.id);
            assert!(res.steps_used <= EPISODE_CAP);
            assert_eq!(res.reward_trace.last().unwrap().goal_bonus, scales.goal_bonus * t.n_objects as f64, "{}", t.id);
        }
    }
}

#[test]
fn independent_terms_only_need_no_goal() {
    let t = find_task("d01").unwrap();
    let m = default_manifest().for_task(t);
    let g = oracle_goal(t, &m, 0).unwrap();
    let mut r = Independent { scales: RewardScales::default() };
    let res = rollout(&m, &g, &mut r, &SimParams::default()).unwrap();
    assert!(res.reward_trace.iter().all(|b| b.goal_shaping == 0.0 && b.goal_bonus == 0.0));
}

fn opts(episodes: usize, seed: u64) -> SuiteOptions {
    SuiteOptions { episodes, seed, ..SuiteOptions::default() }
}

#[test]
fn all_oracle_suite_succeeds() {
    let tasks = suite_tasks("all").unwrap();
    let r = evaluate_suite(&tasks, &BTreeMap::new(), &default_manifest(), &opts(2, 7)).unwrap();
    assert_eq!(r.rows.len(), 41);
    for row in &r.rows {
        assert_eq!(row.success_rate, 1.0, "{}", row.task);
        assert_eq!(row.status, "oracle");
        assert!(row.mean_steps <= 500.0);
    }
}

#[test]
fn suite_is_deterministic_and_seed_sensitive() {
    let tasks = suite_tasks("mtrl").unwrap();
    let a = emit_report(&evaluate_suite(&tasks, &BTreeMap::new(), &default_manifest(), &opts(3, 7)).unwrap(), ReportFormat::Csv);
    let b = emit_report(&evaluate_suite(&tasks, &BTreeMap::new(), &default_manifest(), &opts(3, 7)).unwrap(), ReportFormat::Csv);
    let c = emit_report(&evaluate_suite(&tasks, &BTreeMap::new(), &default_manifest(), &opts(3, 8)).unwrap(), ReportFormat::Csv);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn failed_synthesis_row() {
    let tasks = vec![find_task("d01").unwrap(), find_task("d02").unwrap()];
    let arts: BTreeMap<String, Artifact> = [("d02".to_string(), Artifact::Failed)].into_iter().collect();
    let r = evaluate_suite(&tasks, &arts, &default_manifest(), &opts(2, 0)).unwrap();
    assert_eq!(r.rows[0].status, "oracle");
    assert_eq!(r.rows[1].status, "synthesis_failed");
    assert_eq!(r.rows[1].success_rate, 0.0);
}

#[test]
fn sandboxed_artifacts() {
    let d05 = "def generate_goal(cube_pose):\n    return [[cube_pose[0], cube_pose[1], 0.93]]\n";
    let bad = "def generate_goal(cube_pose):\n    return [[cube_pose[0], cube_pose[1], 0.805]]\n";
    let raises = "def generate_goal(cube_pose):\n    return [[1 / 0]]\n";
    let m01 = "def compute_reward(object_pose, goal_pose, gripper_position, action):\n    return -abs(object_pose[0] - goal_pose[0])\n";
    let text = "def compute_reward(object_pose, goal_pose, gripper_position, action):\n    return 'far'\n";
    let tasks = vec![find_task("d05").unwrap(), find_task("d05").unwrap(), find_task("d05").unwrap()];
    let run = |art: Artifact, tasks: &[&larg::scene::TaskSpec]| {
        let arts: BTreeMap<String, Artifact> = tasks.iter().map(|t| (t.id.clone(), art.clone())).collect();
        evaluate_suite(&tasks[..1], &arts, &default_manifest(), &opts(2, 0)).unwrap().rows.remove(0)
    };
    let row = run(Artifact::Goal(d05.into()), &tasks);
    assert_eq!((row.status.as_str(), row.success_rate), ("synthesized", 1.0));
    let row = run(Artifact::Goal(bad.into()), &tasks);
    assert_eq!((row.status.as_str(), row.success_rate), ("invalid_goal", 0.0));
    let row = run(Artifact::Goal(raises.into()), &tasks);
    assert_eq!((row.status.as_str(), row.success_rate), ("goal_error", 0.0));

    let m = vec![find_task("m01").unwrap()];
    let row = run(Artifact::Reward(m01.into()), &m);
    assert_eq!((row.status.as_str(), row.success_rate), ("synthesized", 1.0));
    let row = run(Artifact::Reward(text.into()), &m);
    assert_eq!((row.status.as_str(), row.success_rate), ("reward_error", 0.0));
}

#[test]
fn report_formats() {
    assert_eq!(emit_report(&SuiteReport::default(), ReportFormat::Csv), "task,episodes,success_rate,mean_steps,status\n");
    let tasks = suite_tasks("gcrl").unwrap();
    assert_eq!(tasks.len(), 32);
    let r = evaluate_suite(&tasks[..4], &BTreeMap::new(), &default_manifest(), &opts(1, 0)).unwrap();
    let md = emit_report(&r, ReportFormat::Markdown);
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with('|') && !l.starts_with("|---")).collect();
    assert_eq!(rows.len(), 4 + 1);
    assert!(rows[0].contains("success_rate"));
    let csv = emit_report(&r, ReportFormat::Csv);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().starts_with("d01,1,1.000,"));
    assert!(ReportFormat::parse("xlsx").is_err());
    assert_eq!(ReportFormat::parse("md"), Ok(ReportFormat::Markdown));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn carry_distance_never_increases(x in -0.6f64..1.6, y in -0.6f64..1.6, z in 0.7f64..1.4, seed in 0u64..1000) {
        let t = find_task("d01").unwrap();
        let m = default_manifest().with_jitter(seed, 0.05).for_task(t);
        let target = Vec3::new(x, y, z);
        let g = GoalSet::new(vec![Pose::at(target)]);
        let res = rollout(&m, &g, &mut native_reward(t, RewardScales::default()), &SimParams::default()).unwrap();
        prop_assert!(res.steps_used <= EPISODE_CAP);
        prop_assert_eq!(res.reward_trace.len(), res.steps_used);
        let carry: Vec<f64> = res.steps.iter()
            .filter(|s| s.phase == ControllerPhase::Carry)
            .map(|s| s.gripper_position.dist(target))
            .collect();
        for w in carry.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        if res.success {
            prop_assert!(res.final_state.cube_poses[0].position.dist(target) <= 0.05);
        }
    }
}
