//! Kinematic tabletop simulator with a scripted pick-and-place controller,
//! episode rollouts and suite evaluation.
//!
//! The gripper moves in straight lines of at most `step_size` per step. It
//! picks the addressed cubes in order: approach, grasp within `grasp_tol`,
//! carry with the cube attached at the gripper, release at the target (where
//! the target orientation is applied). Moves that would leave the arm's reach
//! are refused, so an unreachable target stalls the episode until the cap.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::codegen::placeholder_inputs;
use crate::descriptor::ConstraintDescriptor;
use crate::prompt::SynthKind;
use crate::reward::{
    compose, sandboxed_dependent, GoalTerm, Independent, RewardBreakdown, RewardError, RewardEvaluator, RewardScales,
    StepContext,
};
use crate::sandbox::{spawn_worker, CallResult, SandboxError, WorkerConfig, WorkerHandle};
use crate::scene::{Family, GoalSet, SceneManifest, TaskSpec, JITTER};
use crate::validator::{oracle_goal, validate};
use crate::{Pose, Vec3};

pub const STEP_SIZE: f64 = 0.02;
pub const GRASP_TOL: f64 = 0.01;
pub const EPISODE_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub step_size: f64,
    pub grasp_tol: f64,
    pub success_tol: f64,
    pub max_steps: usize,
    pub gripper_home: Vec3,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            step_size: STEP_SIZE,
            grasp_tol: GRASP_TOL,
            success_tol: crate::reward::SUCCESS_TOL,
            max_steps: EPISODE_CAP,
            gripper_home: Vec3::new(0.5, 0.4, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub cube_poses: Vec<Pose>,
    pub gripper_position: Vec3,
    pub holding: Option<usize>,
    pub step_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerPhase {
    Approach,
    Carry,
    Done,
}

/// Controller view of one step, after the move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub phase: ControllerPhase,
    pub object: Option<usize>,
    pub gripper_position: Vec3,
    pub holding: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps_used: usize,
    pub reward_trace: Vec<RewardBreakdown<f64>>,
    pub steps: Vec<StepInfo>,
    pub final_state: SimState,
}

fn reachable(p: Vec3, m: &SceneManifest) -> bool {
    let ws = &m.workspace;
    p.dist_xy(m.robot_base.position) <= ws.reach_radius + 1e-9 && p.z <= ws.z_range[1] + 1e-9 && p.z >= ws.z_range[0] - 1e-9
}

/// Runs one episode. `g` must have one target per addressed cube (the first
/// `g.len()` cubes of `m`). The reward is evaluated for every addressed cube at
/// every step and summed into the step's breakdown.
pub fn rollout<R: RewardEvaluator<f64> + ?Sized>(
    m: &SceneManifest,
    g: &GoalSet,
    reward: &mut R,
    p: &SimParams,
) -> Result<EpisodeResult, RewardError> {
    let n = g.len().min(m.cubes.len());
    let mut s = SimState {
        cube_poses: m.cubes.iter().take(n).map(|c| c.initial).collect(),
        gripper_position: p.gripper_home,
        holding: None,
        step_count: 0,
    };
    let mut current = 0;
    let mut phase = if n == 0 { ControllerPhase::Done } else { ControllerPhase::Approach };
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    while phase != ControllerPhase::Done && s.step_count < p.max_steps {
        let target = match phase {
            ControllerPhase::Approach => s.cube_poses[current].position,
            _ => g.targets[current].position,
        };
        let before = s.gripper_position;
        let next = before.step_toward(target, p.step_size);
        if reachable(next, m) {
            s.gripper_position = next;
        }
        if let Some(h) = s.holding {
            s.cube_poses[h].position = s.gripper_position;
        }
        s.step_count += 1;
        let object = Some(current);
        if phase == ControllerPhase::Approach && s.gripper_position.dist(s.cube_poses[current].position) <= p.grasp_tol {
            s.holding = Some(current);
            s.cube_poses[current].position = s.gripper_position;
            phase = ControllerPhase::Carry;
        }
        if phase == ControllerPhase::Carry && s.gripper_position.dist(g.targets[current].position) <= p.grasp_tol {
            s.cube_poses[current] = Pose::new(s.gripper_position, g.targets[current].orientation);
            s.holding = None;
            current += 1;
            phase = if current == n { ControllerPhase::Done } else { ControllerPhase::Approach };
        }
        let d = s.gripper_position - before;
        let action = [d.x, d.y, d.z, 0.0, 0.0, 0.0, if s.holding.is_some() { 1.0 } else { 0.0 }];
        let collided = s.gripper_position.z < m.table_height && m.on_footprint(s.gripper_position);
        let mut total = RewardBreakdown::zero();
        for k in 0..n {
            let ctx = StepContext {
                object_pose: s.cube_poses[k],
                gripper_position: s.gripper_position,
                goal: Some(g.targets[k]),
                action,
                collided,
                table_height: m.table_height,
                cube_edge: m.cube_edge,
            };
            total = total.combine(&reward.evaluate(&ctx)?);
        }
        trace.push(total);
        steps.push(StepInfo { phase, object, gripper_position: s.gripper_position, holding: s.holding });
    }
    let success = (0..n).all(|k| s.cube_poses[k].position.dist(g.targets[k].position) <= p.success_tol);
    Ok(EpisodeResult { success, steps_used: s.step_count, reward_trace: trace, steps, final_state: s })
}

/// Native reward for a task: task-independent terms plus distance to the goal
/// (with the orientation term for flip tasks).
pub fn native_reward(t: &TaskSpec, scales: RewardScales<f64>) -> impl RewardEvaluator<f64> {
    let orientation = matches!(t.constraint, ConstraintDescriptor::OrientationFlip { .. });
    compose(Independent { scales }, GoalTerm::new(scales, orientation))
}

/// What to evaluate for a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Oracle,
    /// Accepted goal-function source.
    Goal(String),
    /// Accepted reward-function source.
    Reward(String),
    /// Synthesis did not produce usable code.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub task: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub episodes: usize,
    pub seed: u64,
    pub params: SimParams,
    pub scales: RewardScales<f64>,
    pub jitter: f64,
    pub worker: WorkerConfig,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            episodes: 10,
            seed: 0,
            params: SimParams::default(),
            scales: RewardScales::default(),
            jitter: JITTER,
            worker: WorkerConfig::default(),
        }
    }
}

/// Seed of episode `e` in a suite run with `seed`.
pub fn episode_seed(seed: u64, e: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(e as u64)
}

enum Outcome {
    Episode(EpisodeResult),
    /// The episode could not start or its reward failed; counted as a failure.
    Broken(&'static str),
}

fn sandboxed_goal(src: &str, t: &TaskSpec, m: &SceneManifest, seed: u64, w: &mut WorkerHandle) -> Result<Option<GoalSet>, SandboxError> {
    let args: Vec<Value> = placeholder_inputs(SynthKind::Goal, t, m, seed);
    let entry = crate::prompt::FunctionSignature::goal(t.n_objects).name;
    Ok(match w.run(src, &entry, &args, Some(seed))? {
        CallResult::Ok { value } => GoalSet::from_json(&value, t.n_objects).ok(),
        _ => None,
    })
}

fn ensure_worker<'a>(w: &'a mut Option<WorkerHandle>, cfg: &WorkerConfig) -> Result<&'a mut WorkerHandle, SandboxError> {
    if w.is_none() {
        *w = Some(spawn_worker(cfg)?);
    }
    Ok(w.as_mut().expect("just spawned"))
}

fn run_episode(
    t: &TaskSpec,
    art: &Artifact,
    base: &SceneManifest,
    o: &SuiteOptions,
    e: usize,
    worker: &mut Option<WorkerHandle>,
) -> Result<Outcome, SandboxError> {
    let seed = episode_seed(o.seed, e);
    let m = base.with_jitter(seed, o.jitter).for_task(t);
    let goal = match art {
        Artifact::Goal(src) => match sandboxed_goal(src, t, &m, seed, ensure_worker(worker, &o.worker)?)? {
            Some(g) if validate(&g, t, &m, &m.workspace).is_ok_and(|r| r.valid) => g,
            Some(_) => return Ok(Outcome::Broken("invalid_goal")),
            None => return Ok(Outcome::Broken("goal_error")),
        },
        _ => match oracle_goal(t, &m, seed) {
            Ok(g) => g,
            Err(_) => return Ok(Outcome::Broken("no_oracle")),
        },
    };
    let res = match art {
        Artifact::Reward(src) => {
            let worker = ensure_worker(worker, &o.worker)?;
            match sandboxed_dependent(src, None, worker) {
                Ok(dep) => rollout(&m, &goal, &mut compose(Independent { scales: o.scales }, dep), &o.params),
                Err(err) => Err(err),
            }
        }
        _ => rollout(&m, &goal, &mut native_reward(t, o.scales), &o.params),
    };
    Ok(match res {
        Ok(r) => Outcome::Episode(r),
        Err(RewardError::Worker(e)) => return Err(e),
        Err(_) => Outcome::Broken("reward_error"),
    })
}

/// Evaluates every task with its artifact; tasks without one use the oracle.
/// Rows follow the order of `tasks`. Deterministic in (tasks, artifacts, options).
pub fn evaluate_suite(
    tasks: &[&TaskSpec],
    artifacts: &BTreeMap<String, Artifact>,
    base: &SceneManifest,
    o: &SuiteOptions,
) -> Result<SuiteReport, SandboxError> {
    let mut rows = Vec::with_capacity(tasks.len());
    let mut worker = None;
    for t in tasks {
        let art = artifacts.get(&t.id).unwrap_or(&Artifact::Oracle);
        let mut status = match art {
            Artifact::Oracle => "oracle",
            Artifact::Failed => "synthesis_failed",
            _ => "synthesized",
        };
        if *art == Artifact::Failed {
            rows.push(SuiteRow { task: t.id.clone(), episodes: o.episodes, success_rate: 0.0, mean_steps: 0.0, status: status.into() });
            continue;
        }
        let mut successes = 0;
        let mut steps = 0;
        for e in 0..o.episodes {
            match run_episode(t, art, base, o, e, &mut worker)? {
                Outcome::Episode(r) => {
                    successes += r.success as usize;
                    steps += r.steps_used;
                }
                Outcome::Broken(why) => {
                    status = why;
                    steps += o.params.max_steps;
                }
            }
        }
        let n = o.episodes.max(1) as f64;
        rows.push(SuiteRow {
            task: t.id.clone(),
            episodes: o.episodes,
            success_rate: if o.episodes == 0 { 0.0 } else { successes as f64 / n },
            mean_steps: if o.episodes == 0 { 0.0 } else { steps as f64 / n },
            status: status.into(),
        });
    }
    Ok(SuiteReport { rows })
}

/// Tasks of a suite name: gcrl, mtrl or all.
pub fn suite_tasks(suite: &str) -> Option<Vec<&'static TaskSpec>> {
    let all = crate::scene::task_catalog();
    let pick = |f: Option<Family>| all.iter().filter(|t| f.is_none_or(|f| t.family == f)).collect();
    match suite {
        "gcrl" => Some(pick(Some(Family::GoalGcrl))),
        "mtrl" => Some(pick(Some(Family::RewardMtrl))),
        "all" => Some(pick(None)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format '{other}' (expected csv or md)")),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

pub const REPORT_COLUMNS: [&str; 5] = ["task", "episodes", "success_rate", "mean_steps", "status"];

pub fn emit_report(r: &SuiteReport, f: ReportFormat) -> String {
    let cells = |row: &SuiteRow| {
        [
            row.task.clone(),
            row.episodes.to_string(),
            format!("{:.3}", row.success_rate),
            format!("{:.1}", row.mean_steps),
            row.status.clone(),
        ]
    };
    let mut out = String::new();
    match f {
        ReportFormat::Csv => {
            out.push_str(&REPORT_COLUMNS.join(","));
            out.push('\n');
            for row in &r.rows {
                out.push_str(&cells(row).join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            out.push_str(&format!("| {} |\n", REPORT_COLUMNS.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(REPORT_COLUMNS.len())));
            for row in &r.rows {
                out.push_str(&format!("| {} |\n", cells(row).join(" | ")));
            }
        }
    }
    out
}
