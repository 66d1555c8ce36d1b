use larg::geom;
use larg::reward::*;
use larg::sandbox::{spawn_worker, WorkerConfig};
use larg::{Pose, Vec3};
use proptest::prelude::*;

fn ctx(object: Vec3, gripper: Vec3, goal: Option<Vec3>) -> StepContext<f64> {
    StepContext {
        object_pose: Pose::at(object),
        gripper_position: gripper,
        goal: goal.map(Pose::at),
        action: [0.0; 7],
        collided: false,
        table_height: 0.78,
        cube_edge: 0.05,
    }
}

const REST: Vec3 = Vec3::new(0.5, 0.5, 0.805);

#[test]
fn default_scales_match_the_data_file() {
    let s = RewardScales::<f64>::from_toml(DEFAULT_SCALES_TOML).unwrap();
    assert_eq!(s, RewardScales::default());
    assert_eq!((s.object_dist, s.lift_bonus, s.goal_dist), (0.08, 4.0, 1.28));
    assert_eq!((s.goal_bonus, s.action_penalty, s.collision_penalty), (4.0, 0.01, 1.28));
    assert!(RewardScales::<f64>::from_toml(&DEFAULT_SCALES_TOML.replace("4.0", "-4.0")).is_err());
    assert!(RewardScales::<f64>::from_toml("object_dist = 1").is_err());
}

#[test]
fn gripper_at_resting_object_gives_full_reach_only() {
    let b = eval_independent(&ctx(REST, REST, None), &RewardScales::default());
    assert_eq!(b.reach, 0.08);
    assert_eq!([b.lift, b.goal_shaping, b.goal_bonus, b.action, b.collision], [0.0; 5]);
    assert_eq!(b.total, 0.08);
}

#[test]
fn lifted_object_earns_the_bonus() {
    let up = Vec3::new(0.5, 0.5, 0.78 + 0.10);
    assert_eq!(eval_independent(&ctx(up, up, None), &RewardScales::default()).lift, 4.0);
    // threshold sits 2 cm above resting height
    let just_below = Vec3::new(0.5, 0.5, 0.805 + 0.0199);
    assert_eq!(eval_independent(&ctx(just_below, just_below, None), &RewardScales::default()).lift, 0.0);
}

#[test]
fn unit_action_and_collision_penalties() {
    let mut c = ctx(REST, REST, None);
    c.action = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    c.collided = true;
    let b = eval_independent(&c, &RewardScales::default());
    assert_eq!(b.action, -0.01);
    assert_eq!(b.collision, -1.28);
}

#[test]
fn goal_term_values() {
    let s = RewardScales::default();
    let o = Pose::at(REST);
    assert_eq!(eval_goal_term(&o, &o, &s, SUCCESS_TOL), (1.28, 4.0));
    let (sh, bo) = eval_goal_term(&o, &Pose::at(REST + Vec3::new(1.0, 0.0, 0.0)), &s, SUCCESS_TOL);
    assert_eq!((sh, bo), (0.64, 0.0));
    let near = eval_goal_term(&o, &Pose::at(REST + Vec3::new(0.1, 0.0, 0.0)), &s, SUCCESS_TOL).0;
    let far = eval_goal_term(&o, &Pose::at(REST + Vec3::new(0.2, 0.0, 0.0)), &s, SUCCESS_TOL).0;
    assert!(near > far);
}

#[test]
fn goal_term_works_in_single_precision() {
    let s = RewardScales::<f32>::default();
    let o = geom::Pose::at(geom::Vec3::new(0.5f32, 0.5, 0.805));
    let g = geom::Pose::at(geom::Vec3::new(1.5f32, 0.5, 0.805));
    let (sh, bo) = eval_goal_term(&o, &g, &s, 0.05);
    assert!((sh - 0.64).abs() < 1e-6);
    assert_eq!(bo, 0.0);
}

#[test]
fn orientation_error_only_when_asked() {
    let s = RewardScales::default();
    let mut c = ctx(REST, REST, Some(REST));
    c.goal = Some(Pose::new(REST, larg::Quat::new(0.0, 1.0, 0.0, 0.0)));
    let plain = GoalTerm::new(s, false).evaluate(&c).unwrap();
    let oriented = GoalTerm::new(s, true).evaluate(&c).unwrap();
    assert_eq!(plain.goal_shaping, 1.28);
    assert!((oriented.goal_shaping - (1.28 - 0.5 * std::f64::consts::PI)).abs() < 1e-9);
}

#[test]
fn composing_with_zero_keeps_the_independent_total() {
    let s = RewardScales::default();
    let c = ctx(REST, REST + Vec3::new(0.0, 0.0, 0.1), Some(REST));
    let alone = Independent { scales: s }.evaluate(&c).unwrap();
    let mut zero_fn = |_: &StepContext<f64>| Ok(RewardBreakdown::zero());
    let composed = compose(Independent { scales: s }, &mut zero_fn).evaluate(&c).unwrap();
    assert_eq!(composed.total, alone.total);
    assert_eq!(compose(Independent { scales: s }, ZeroTerm).evaluate(&c).unwrap(), alone);
}

#[test]
fn zero_context_totals_the_reach_term() {
    let z = Vec3::new(0.0, 0.0, 0.0);
    let mut c = ctx(z, z, None);
    c.table_height = 0.0;
    c.cube_edge = 0.0;
    let b = compose(Independent { scales: RewardScales::default() }, ZeroTerm).evaluate(&c).unwrap();
    assert_eq!(b.total, b.reach);
    assert_eq!(b.reach, 0.08);
}

const NEG_DIST: &str = "import math\n\ndef compute_reward(object_pose, goal_pose, gripper_position, action):\n    return -math.dist(object_pose[:3], goal_pose[:3])\n";

#[test]
fn sandboxed_term_lands_in_goal_shaping() {
    let s = RewardScales::default();
    let mut w = spawn_worker(&WorkerConfig::default()).unwrap();
    let goal = Pose::at(REST + Vec3::new(0.3, 0.0, 0.0));
    let dep = sandboxed_dependent(NEG_DIST, Some(goal), &mut w).unwrap();
    let mut r = compose(Independent { scales: s }, dep);
    let mut last = f64::NEG_INFINITY;
    for k in 0..5 {
        // object approaches the goal, gripper stays on it
        let p = REST + Vec3::new(0.06 * k as f64, 0.0, 0.0);
        let b = r.evaluate(&ctx(p, p, None)).unwrap();
        assert!((b.goal_shaping + (0.3 - 0.06 * k as f64)).abs() < 1e-12);
        assert_eq!(b.total, b.reach + b.lift + b.goal_shaping + b.goal_bonus + b.action + b.collision);
        assert!(b.total > last);
        last = b.total;
    }
}

#[test]
fn sandboxed_term_errors_are_surfaced() {
    let mut w = spawn_worker(&WorkerConfig::default()).unwrap();
    let c = ctx(REST, REST, Some(REST));
    let text = "def compute_reward(o, g, p, a):\n    return 'high'\n";
    let err = sandboxed_dependent(text, None, &mut w).unwrap().evaluate(&c).unwrap_err();
    assert!(matches!(err, RewardError::NonNumeric(_)), "{err}");

    let boom = "def compute_reward(o, g, p, a):\n    return o[9]\n";
    let err = sandboxed_dependent(boom, None, &mut w).unwrap().evaluate(&c).unwrap_err();
    assert!(matches!(err, RewardError::Raised(ref d) if d.etype == "IndexError"), "{err}");

    let cfg = WorkerConfig { call_timeout: std::time::Duration::from_millis(50), ..WorkerConfig::default() };
    let mut w = spawn_worker(&cfg).unwrap();
    let slow = "def compute_reward(o, g, p, a):\n    while True:\n        pass\n";
    let mut dep = sandboxed_dependent(slow, None, &mut w).unwrap();
    assert!(matches!(dep.evaluate(&c).unwrap_err(), RewardError::Timeout(_)));
    // reloaded after the restart, so it times out again rather than reporting a missing entry
    assert!(matches!(dep.evaluate(&c).unwrap_err(), RewardError::Timeout(_)));

    assert!(matches!(sandboxed_dependent("def other():\n    return 1\n", None, &mut w), Err(RewardError::Raised(_))));
}

fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
    (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn context() -> impl Strategy<Value = StepContext<f64>> {
    (vec3(0.0, 1.3), vec3(0.0, 1.3), prop::option::of(vec3(0.0, 1.3)), prop::array::uniform7(-1.0f64..1.0), any::<bool>())
        .prop_map(|(o, g, goal, action, collided)| StepContext {
            object_pose: Pose::at(o),
            gripper_position: g,
            goal: goal.map(Pose::at),
            action,
            collided,
            table_height: 0.78,
            cube_edge: 0.05,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn total_is_the_sum_of_terms(c in context(), orient in any::<bool>()) {
        let s = RewardScales::default();
        let b = compose(Independent { scales: s }, GoalTerm::new(s, orient)).evaluate(&c).unwrap();
        prop_assert_eq!(b.total, b.reach + b.lift + b.goal_shaping + b.goal_bonus + b.action + b.collision);
    }

    #[test]
    fn goal_shaping_strictly_decreases_with_distance(d1 in 0.0f64..3.0, gap in 1e-6f64..1.0) {
        let s = RewardScales::<f64>::default();
        let o = Pose::at(REST);
        let a = eval_goal_term(&o, &Pose::at(REST + Vec3::new(d1, 0.0, 0.0)), &s, SUCCESS_TOL).0;
        let b = eval_goal_term(&o, &Pose::at(REST + Vec3::new(d1 + gap, 0.0, 0.0)), &s, SUCCESS_TOL).0;
        prop_assert!(a > b);
    }

    #[test]
    fn total_peaks_at_the_goal_along_a_segment(start in vec3(0.1, 0.9), goal in vec3(0.1, 0.9), offset in vec3(-0.1, 0.1)) {
        // object slides from start to goal with the gripper at a fixed offset and height fixed
        let s = RewardScales::default();
        let goal = Vec3::new(goal.x, goal.y, 0.805);
        let start = Vec3::new(start.x, start.y, 0.805);
        let mut r = compose(Independent { scales: s }, GoalTerm::new(s, false));
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=20 {
            let p = start + (goal - start) * (k as f64 / 20.0);
            let b = r.evaluate(&ctx(p, p + offset, Some(goal))).unwrap();
            prop_assert!(b.total >= prev - 1e-12);
            prev = b.total;
        }
    }

    #[test]
    fn crossing_the_lift_threshold_adds_exactly_the_bonus(c in context(), below in 0.001f64..0.1, above in 0.001f64..0.1) {
        let s = RewardScales::default();
        let threshold = 0.78 + 0.025 + LIFT_MARGIN;
        let mut lo = c;
        let mut hi = c;
        lo.object_pose.position.z = threshold - below;
        hi.object_pose.position.z = threshold + above;
        // keep every other term identical
        lo.gripper_position = lo.object_pose.position;
        hi.gripper_position = hi.object_pose.position;
        let a = eval_independent(&lo, &s);
        let b = eval_independent(&hi, &s);
        prop_assert_eq!(b.lift - a.lift, 4.0);
        prop_assert_eq!(b.terms()[0], a.terms()[0]);
        // the total picks up rounding from the other terms
        prop_assert!((b.total - a.total - 4.0).abs() <= 8.0 * f64::EPSILON * b.total.abs().max(1.0));
    }

    #[test]
    fn collision_flag_subtracts_exactly_the_penalty(c in context()) {
        let s = RewardScales::default();
        let mut hit = c;
        let mut clear = c;
        hit.collided = true;
        clear.collided = false;
        let (a, b) = (eval_independent(&clear, &s), eval_independent(&hit, &s));
        prop_assert_eq!(b.collision - a.collision, -1.28);
        prop_assert!((b.total - a.total + 1.28).abs() <= 8.0 * f64::EPSILON * a.total.abs().max(1.0));
        prop_assert_eq!(b.reach, a.reach);
        prop_assert_eq!(b.action, a.action);
    }
}
