//! Reward terms and their composition.
//!
//! Task-independent terms (reach shaping, lift bonus, action and collision
//! penalties) are summed with one task-dependent term, either the native goal
//! term or a generated function running in the sandbox.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::geom::{Pose, Real, Vec3};
use crate::sandbox::{CallResult, Diagnostic, SandboxError, WorkerHandle};

pub const DEFAULT_SCALES_TOML: &str = include_str!("../data/reward_scales.toml");

/// Distance under which an object counts as at its target, meters.
pub const SUCCESS_TOL: f64 = 0.05;
/// How far above resting height the object must be for the lift bonus.
pub const LIFT_MARGIN: f64 = 0.02;
/// Weight of the orientation error for orientation-constrained tasks, per radian.
pub const ORIENTATION_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardScales<T> {
    pub object_dist: T,
    pub lift_bonus: T,
    pub goal_dist: T,
    pub goal_bonus: T,
    pub action_penalty: T,
    pub collision_penalty: T,
}

impl<T: Real> Default for RewardScales<T> {
    fn default() -> Self {
        RewardScales {
            object_dist: T::lit(0.08),
            lift_bonus: T::lit(4.0),
            goal_dist: T::lit(1.28),
            goal_bonus: T::lit(4.0),
            action_penalty: T::lit(0.01),
            collision_penalty: T::lit(1.28),
        }
    }
}

impl<T: Real> RewardScales<T> {
    pub fn check(&self) -> Result<(), String> {
        let all = [
            ("object_dist", self.object_dist),
            ("lift_bonus", self.lift_bonus),
            ("goal_dist", self.goal_dist),
            ("goal_bonus", self.goal_bonus),
            ("action_penalty", self.action_penalty),
            ("collision_penalty", self.collision_penalty),
        ];
        for (name, v) in all {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        Ok(())
    }
}

impl RewardScales<f64> {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let s: RewardScales<f64> = toml::from_str(text).map_err(|e| e.to_string())?;
        s.check()?;
        Ok(s)
    }
}

/// Everything a reward term may look at for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext<T> {
    pub object_pose: Pose<T>,
    pub gripper_position: Vec3<T>,
    pub goal: Option<Pose<T>>,
    /// Joint displacement command.
    pub action: [T; 7],
    pub collided: bool,
    pub table_height: T,
    pub cube_edge: T,
}

impl<T: Real> StepContext<T> {
    pub fn is_finite(&self) -> bool {
        self.object_pose.position.is_finite()
            && self.gripper_position.is_finite()
            && self.goal.is_none_or(|g| g.position.is_finite())
            && self.action.iter().all(|a| a.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown<T> {
    pub reach: T,
    pub lift: T,
    pub goal_shaping: T,
    pub goal_bonus: T,
    pub action: T,
    pub collision: T,
    pub total: T,
}

impl<T: Real> RewardBreakdown<T> {
    /// Builds a breakdown whose total is the left-to-right sum of the terms.
    pub fn from_terms(reach: T, lift: T, goal_shaping: T, goal_bonus: T, action: T, collision: T) -> Self {
        let total = reach + lift + goal_shaping + goal_bonus + action + collision;
        RewardBreakdown { reach, lift, goal_shaping, goal_bonus, action, collision, total }
    }

    pub fn zero() -> Self {
        Self::from_terms(T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn terms(&self) -> [T; 6] {
        [self.reach, self.lift, self.goal_shaping, self.goal_bonus, self.action, self.collision]
    }

    /// Termwise sum; the total is recomputed from the summed terms.
    pub fn combine(&self, o: &Self) -> Self {
        Self::from_terms(
            self.reach + o.reach,
            self.lift + o.lift,
            self.goal_shaping + o.goal_shaping,
            self.goal_bonus + o.goal_bonus,
            self.action + o.action,
            self.collision + o.collision,
        )
    }
}

/// Shaping used by every distance term: `scale / (1 + d^2)`.
pub fn shaping<T: Real>(scale: T, d: T) -> T {
    scale / (T::one() + d * d)
}

/// Reach, lift, action and collision terms. Goal terms are zero.
pub fn eval_independent<T: Real>(ctx: &StepContext<T>, s: &RewardScales<T>) -> RewardBreakdown<T> {
    let d = ctx.gripper_position.dist(ctx.object_pose.position);
    let threshold = ctx.table_height + ctx.cube_edge / T::lit(2.0) + T::lit(LIFT_MARGIN);
    let lift = if ctx.object_pose.position.z > threshold { s.lift_bonus } else { T::zero() };
    let a2 = ctx.action.iter().fold(T::zero(), |acc, &a| acc + a * a);
    let collision = if ctx.collided { -s.collision_penalty } else { T::zero() };
    RewardBreakdown::from_terms(shaping(s.object_dist, d), lift, T::zero(), T::zero(), -s.action_penalty * a2, collision)
}

/// Goal shaping and success bonus for one object.
pub fn eval_goal_term<T: Real>(object_pose: &Pose<T>, goal: &Pose<T>, s: &RewardScales<T>, success_tol: T) -> (T, T) {
    let d = object_pose.position.dist(goal.position);
    let bonus = if d < success_tol { s.goal_bonus } else { T::zero() };
    (shaping(s.goal_dist, d), bonus)
}

/// Orientation penalty for tasks that constrain the final orientation.
pub fn orientation_term<T: Real>(object_pose: &Pose<T>, goal: &Pose<T>) -> T {
    -T::lit(ORIENTATION_WEIGHT) * object_pose.orientation.angle_to(goal.orientation)
}

#[derive(Debug)]
pub enum RewardError {
    /// The generated function raised.
    Raised(Diagnostic),
    Timeout(Diagnostic),
    NonNumeric(String),
    Worker(SandboxError),
}

impl fmt::Display for RewardError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardError::Raised(d) => write!(f, "reward function raised {}: {}", d.etype, d.message),
            RewardError::Timeout(d) => write!(f, "reward function timed out: {}", d.message),
            RewardError::NonNumeric(v) => write!(f, "reward function returned a non-numeric value: {v}"),
            RewardError::Worker(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RewardError {}

impl From<SandboxError> for RewardError {
    fn from(e: SandboxError) -> Self {
        RewardError::Worker(e)
    }
}

pub trait RewardEvaluator<T: Real> {
    fn evaluate(&mut self, ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError>;
}

impl<T: Real, F> RewardEvaluator<T> for F
where
    F: FnMut(&StepContext<T>) -> Result<RewardBreakdown<T>, RewardError>,
{
    fn evaluate(&mut self, ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError> {
        self(ctx)
    }
}

impl<T: Real> RewardEvaluator<T> for Box<dyn RewardEvaluator<T> + '_> {
    fn evaluate(&mut self, ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError> {
        (**self).evaluate(ctx)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Independent<T> {
    pub scales: RewardScales<T>,
}

impl<T: Real> RewardEvaluator<T> for Independent<T> {
    fn evaluate(&mut self, ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError> {
        Ok(eval_independent(ctx, &self.scales))
    }
}

/// Native task-dependent term: distance of the object to the context goal.
#[derive(Debug, Clone, Copy)]
pub struct GoalTerm<T> {
    pub scales: RewardScales<T>,
    pub success_tol: T,
    pub orientation: bool,
}

impl<T: Real> GoalTerm<T> {
    pub fn new(scales: RewardScales<T>, orientation: bool) -> Self {
        GoalTerm { scales, success_tol: T::lit(SUCCESS_TOL), orientation }
    }
}

impl<T: Real> RewardEvaluator<T> for GoalTerm<T> {
    fn evaluate(&mut self, ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError> {
        let Some(goal) = ctx.goal else {
            return Ok(RewardBreakdown::zero());
        };
        let (mut shaping, bonus) = eval_goal_term(&ctx.object_pose, &goal, &self.scales, self.success_tol);
        if self.orientation {
            shaping = shaping + orientation_term(&ctx.object_pose, &goal);
        }
        let z = T::zero();
        Ok(RewardBreakdown::from_terms(z, z, shaping, bonus, z, z))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTerm;

impl<T: Real> RewardEvaluator<T> for ZeroTerm {
    fn evaluate(&mut self, _ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError> {
        Ok(RewardBreakdown::zero())
    }
}

pub struct Composed<A, B> {
    pub independent: A,
    pub dependent: B,
}

impl<T: Real, A: RewardEvaluator<T>, B: RewardEvaluator<T>> RewardEvaluator<T> for Composed<A, B> {
    fn evaluate(&mut self, ctx: &StepContext<T>) -> Result<RewardBreakdown<T>, RewardError> {
        let a = self.independent.evaluate(ctx)?;
        let b = self.dependent.evaluate(ctx)?;
        Ok(a.combine(&b))
    }
}

pub fn compose<A, B>(independent: A, dependent: B) -> Composed<A, B> {
    Composed { independent, dependent }
}

/// Entry point generated reward functions must define.
pub const REWARD_ENTRY: &str = "compute_reward";

/// Task-dependent term computed by a generated function in a sandbox worker.
/// The returned scalar lands in the goal-shaping slot.
pub struct SandboxedDependent<'w> {
    worker: &'w mut WorkerHandle,
    source: String,
    goal: Option<Pose<f64>>,
    timeout: Duration,
}

/// Loads `source` into `worker` and wraps it as a reward term. With `goal` set it
/// overrides the goal in each step context.
pub fn sandboxed_dependent<'w>(
    source: &str,
    goal: Option<Pose<f64>>,
    worker: &'w mut WorkerHandle,
) -> Result<SandboxedDependent<'w>, RewardError> {
    let timeout = worker.config().call_timeout;
    match worker.load_source(source, REWARD_ENTRY)? {
        CallResult::Ok { .. } => Ok(SandboxedDependent { worker, source: source.to_string(), goal, timeout }),
        CallResult::Error { diagnostic } => Err(RewardError::Raised(diagnostic)),
        CallResult::Timeout { diagnostic } => Err(RewardError::Timeout(diagnostic)),
    }
}

/// Positional arguments for `compute_reward(object_pose, goal_pose, gripper_position, action)`.
pub fn reward_args(ctx: &StepContext<f64>, goal: Option<Pose<f64>>) -> Vec<Value> {
    let goal = goal.or(ctx.goal).map(|g| json!(g.to_array7())).unwrap_or(Value::Null);
    vec![json!(ctx.object_pose.to_array7()), goal, json!(ctx.gripper_position.to_array()), json!(ctx.action)]
}

impl SandboxedDependent<'_> {
    pub fn source(&self) -> &str {
        &self.source
    }
}

impl RewardEvaluator<f64> for SandboxedDependent<'_> {
    fn evaluate(&mut self, ctx: &StepContext<f64>) -> Result<RewardBreakdown<f64>, RewardError> {
        let args = reward_args(ctx, self.goal);
        match self.worker.call_entry(&args, self.timeout, None)? {
            CallResult::Ok { value } => match value.as_f64() {
                Some(v) if v.is_finite() => Ok(RewardBreakdown::from_terms(0.0, 0.0, v, 0.0, 0.0, 0.0)),
                _ => Err(RewardError::NonNumeric(value.to_string())),
            },
            CallResult::Error { diagnostic } => Err(RewardError::Raised(diagnostic)),
            CallResult::Timeout { diagnostic } => {
                // the worker was replaced; reload so later steps still work
                let _ = self.worker.load_source(&self.source, REWARD_ENTRY);
                Err(RewardError::Timeout(diagnostic))
            }
        }
    }
}
