//! Goal validation against task descriptors, reference goal generators, and the
//! mutation classes used to check that validation actually discriminates.

use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::descriptor::{frame, Bound, ConstraintDescriptor, Diagonal};
use crate::scene::{GoalSet, SceneManifest, TaskSpec, WorkspaceBounds};
use crate::{Pose, Quat, Vec3};

const EPS: f64 = 1e-9;
const ORACLE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Violation {
    /// Index of the offending target, or `None` for predicates over several targets.
    pub target: Option<usize>,
    pub rule: String,
    pub measured: f64,
    pub bound: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidateError {
    LengthMismatch { expected: usize, got: usize },
}

impl fmt::Display for ValidateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidateError::LengthMismatch { expected, got } => {
                write!(f, "goal set has {got} target(s), task addresses {expected}")
            }
        }
    }
}

impl std::error::Error for ValidateError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleError {
    pub task: String,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no valid goal found for task {} in this scene", self.task)
    }
}

impl std::error::Error for OracleError {}

/// One measured quantity and the interval it must fall in.
#[derive(Debug, Clone)]
struct Check {
    target: Option<usize>,
    rule: String,
    measured: f64,
    lo: f64,
    hi: f64,
}

impl Check {
    fn new(target: Option<usize>, rule: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Check { target, rule: rule.into(), measured, lo, hi }
    }

    fn info(rule: impl Into<String>, measured: f64) -> Self {
        Check::new(None, rule, measured, f64::NEG_INFINITY, f64::INFINITY)
    }

    fn bound(target: Option<usize>, rule: impl Into<String>, measured: f64, b: &Bound) -> Self {
        Check::new(target, rule, measured, b.lo(), b.hi())
    }

    fn ok(&self) -> bool {
        self.measured.is_finite() && self.measured >= self.lo - EPS && self.measured <= self.hi + EPS
    }

    fn violation(&self) -> Violation {
        let bound = match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => format!("[{:.4}, {:.4}]", self.lo, self.hi),
            (true, false) => format!(">= {:.4}", self.lo),
            (false, true) => format!("<= {:.4}", self.hi),
            (false, false) => "finite".to_string(),
        };
        Violation { target: self.target, rule: self.rule.clone(), measured: self.measured, bound }
    }
}

fn workspace_checks(i: usize, p: &Pose, m: &SceneManifest, b: &WorkspaceBounds, out: &mut Vec<Check>) {
    let q = p.position;
    let d = q.dist_xy(m.robot_base.position);
    out.push(Check::new(Some(i), "workspace.x", q.x, b.x_range[0], b.x_range[1]));
    out.push(Check::new(Some(i), "workspace.y", q.y, b.y_range[0], b.y_range[1]));
    out.push(Check::new(Some(i), "workspace.z", q.z, b.z_range[0], b.z_range[1]));
    out.push(Check::new(Some(i), "workspace.reach", d, f64::NEG_INFINITY, b.reach_radius));
    out.push(Check::new(Some(i), "workspace.base_exclusion", d, b.base_exclusion_radius, f64::INFINITY));
}

/// Cosine of the interior angle at every vertex of the triangle `p`.
fn vertex_cosines(p: [Vec3; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, c) in out.iter_mut().enumerate() {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        *c = a.dot(b) / (a.norm() * b.norm());
    }
    out
}

/// Side lengths for the pairs (0,1), (0,2), (1,2).
fn sides(p: [Vec3; 3]) -> [f64; 3] {
    [p[0].dist(p[1]), p[0].dist(p[2]), p[1].dist(p[2])]
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn flat(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0)
}

fn abs_min(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

fn abs_max(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn triangle_shape_checks(p: [Vec3; 3], min_side: f64, out: &mut Vec<Check>) -> ([f64; 3], [f64; 3]) {
    let s = sides(p);
    let cos = vertex_cosines(p);
    for (k, (i, j)) in PAIRS.iter().enumerate() {
        out.push(Check::new(None, format!("side.{i}{j}"), s[k], min_side, f64::INFINITY));
    }
    for (k, c) in cos.iter().enumerate() {
        out.push(Check::info(format!("cos.v{k}"), *c));
    }
    out.push(Check::new(None, "triangle.degeneracy", abs_max(&cos), 0.0, frame::DEGENERATE_COS));
    (s, cos)
}

fn square_distances(g: &GoalSet, m: &SceneManifest) -> Vec<f64> {
    let c = flat(m.table_center());
    let pts = [c, flat(g.targets[0].position), flat(g.targets[1].position), flat(g.targets[2].position)];
    let mut d = Vec::with_capacity(6);
    for i in 0..4 {
        for j in i + 1..4 {
            d.push(pts[i].dist(pts[j]));
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

/// All measured quantities for the task predicate, excluding workspace membership.
fn task_checks(g: &GoalSet, t: &TaskSpec, m: &SceneManifest) -> Vec<Check> {
    let mut out = Vec::new();
    let th = m.table_height;
    let (sx, sy) = (m.table_size.x, m.table_size.y);
    let base = m.robot_base.position;
    let p = |i: usize| g.targets[i].position;
    match &t.constraint {
        ConstraintDescriptor::Region { x, y, z_above } => {
            if let Some(b) = x {
                out.push(Check::bound(Some(0), "region.x", p(0).x, b));
            }
            if let Some(b) = y {
                out.push(Check::bound(Some(0), "region.y", p(0).y, b));
            }
            if let Some(b) = z_above {
                out.push(Check::bound(Some(0), "height.z_above", p(0).z - th, b));
            }
        }
        ConstraintDescriptor::Height { z_above } => {
            out.push(Check::bound(Some(0), "height.z_above", p(0).z - th, z_above));
        }
        ConstraintDescriptor::RelativeOffset { dx, dy, dz, z_above } => {
            let init = m.cubes[0].initial.position;
            let d = p(0) - init;
            for (name, b, v) in [("offset.dx", dx, d.x), ("offset.dy", dy, d.y), ("offset.dz", dz, d.z)] {
                if let Some(b) = b {
                    out.push(Check::bound(Some(0), name, v, b));
                }
            }
            if let Some(b) = z_above {
                out.push(Check::bound(Some(0), "height.z_above", p(0).z - th, b));
            }
        }
        ConstraintDescriptor::OrientationFlip { tol } => {
            let z = g.targets[0].orientation.rotate(Vec3::new(0.0, 0.0, 1.0));
            let angle = (-z.z).clamp(-1.0, 1.0).acos();
            out.push(Check::new(Some(0), "flip.angle", angle, 0.0, *tol));
        }
        ConstraintDescriptor::CornerAny { band } => {
            let q = p(0);
            let d = [(0.0, 0.0), (sx, 0.0), (0.0, sy), (sx, sy)]
                .iter()
                .map(|(cx, cy)| (q.x - cx).abs().max((q.y - cy).abs()))
                .fold(f64::INFINITY, f64::min);
            out.push(Check::new(Some(0), "corner.distance", d, 0.0, *band));
        }
        ConstraintDescriptor::Diagonal { diagonal, tol } => {
            let q = p(0);
            let h = sx.hypot(sy);
            let main = (sy * q.x - sx * q.y).abs() / h;
            let anti = (sy * q.x + sx * q.y - sx * sy).abs() / h;
            let d = match diagonal {
                Diagonal::Main => main,
                Diagonal::Anti => anti,
                Diagonal::Either => main.min(anti),
            };
            out.push(Check::new(Some(0), "diagonal.distance", d, 0.0, *tol));
        }
        ConstraintDescriptor::OffTable { margin } => {
            out.push(Check::new(Some(0), "off_table.margin", m.distance_outside_footprint(p(0)), *margin, f64::INFINITY));
        }
        ConstraintDescriptor::ProximityToBase { max } => {
            out.push(Check::new(Some(0), "base.distance", p(0).dist_xy(base), 0.0, *max));
        }
        ConstraintDescriptor::DistanceFromBase { min } => {
            out.push(Check::new(Some(0), "base.distance", p(0).dist_xy(base), *min, f64::INFINITY));
        }
        ConstraintDescriptor::MultiLeftCenterRight { band, center_tol } => {
            out.push(Check::new(Some(0), "left.x", p(0).x, 0.0, *band));
            out.push(Check::new(Some(1), "right.x", p(1).x, sx - band, sx));
            out.push(Check::new(Some(2), "center.distance", p(2).dist_xy(m.table_center()), 0.0, *center_tol));
        }
        ConstraintDescriptor::MultiPairwiseDistance { distance, tol } => {
            for (i, j) in PAIRS {
                out.push(Check::new(None, format!("distance.{i}{j}"), p(i).dist(p(j)), distance - tol, distance + tol));
            }
        }
        ConstraintDescriptor::MultiRightTriangle { cos_tol, min_side } => {
            let (_, cos) = triangle_shape_checks([p(0), p(1), p(2)], *min_side, &mut out);
            out.push(Check::new(None, "right_angle.cos", abs_min(&cos), 0.0, *cos_tol));
        }
        ConstraintDescriptor::MultiIsosceles { tol, min_side } => {
            let (s, _) = triangle_shape_checks([p(0), p(1), p(2)], *min_side, &mut out);
            let diff = [(s[0] - s[1]), (s[0] - s[2]), (s[1] - s[2])];
            out.push(Check::new(None, "isosceles.side_difference", abs_min(&diff), 0.0, *tol));
        }
        ConstraintDescriptor::MultiSquareCenterCorner { tol, min_side } => {
            let d = square_distances(g, m);
            let side = d[..4].iter().sum::<f64>() / 4.0;
            out.push(Check::new(None, "square.side", side, *min_side, f64::INFINITY));
            out.push(Check::new(None, "square.side_spread", d[3] - d[0], 0.0, *tol));
            for (k, diag) in d[4..].iter().enumerate() {
                out.push(Check::new(None, format!("square.diagonal{k}"), *diag, side * SQRT_2 - tol, side * SQRT_2 + tol));
            }
        }
    }
    out
}

fn check_len(g: &GoalSet, t: &TaskSpec, m: &SceneManifest) -> Result<(), ValidateError> {
    if g.len() != t.n_objects || m.cubes.len() < t.n_objects {
        return Err(ValidateError::LengthMismatch { expected: t.n_objects, got: g.len() });
    }
    Ok(())
}

/// Raw measurements behind [`validate`], without workspace membership.
pub fn measure(g: &GoalSet, t: &TaskSpec, m: &SceneManifest) -> Result<Vec<(String, f64)>, ValidateError> {
    check_len(g, t, m)?;
    Ok(task_checks(g, t, m).into_iter().map(|c| (c.rule, c.measured)).collect())
}

/// Checks workspace membership of every target (off-table tasks check reach and
/// height only) and the task predicate. Every failed rule is reported.
pub fn validate(g: &GoalSet, t: &TaskSpec, m: &SceneManifest, b: &WorkspaceBounds) -> Result<ValidationReport, ValidateError> {
    check_len(g, t, m)?;
    let mut checks = Vec::new();
    let off_table = matches!(t.constraint, ConstraintDescriptor::OffTable { .. });
    for (i, target) in g.targets.iter().enumerate() {
        let mut ws = Vec::new();
        workspace_checks(i, target, m, b, &mut ws);
        if off_table {
            ws.retain(|c| c.rule != "workspace.x" && c.rule != "workspace.y");
        }
        checks.extend(ws);
        if target.check().is_err() {
            checks.push(Check::new(Some(i), "pose.well_formed", f64::NAN, 0.0, 0.0));
        }
    }
    checks.extend(task_checks(g, t, m));
    let violations: Vec<Violation> = checks.iter().filter(|c| !c.ok()).map(Check::violation).collect();
    Ok(ValidationReport { valid: violations.is_empty(), violations })
}

fn task_salt(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sample_bound(rng: &mut ChaCha8Rng, b: &Option<Bound>, default: (f64, f64)) -> f64 {
    match b {
        Some(b) => {
            let (lo, hi) = b.sample_range();
            uniform(rng, lo, hi)
        }
        None => uniform(rng, default.0, default.1),
    }
}

fn clip(b: &Option<Bound>, range: [f64; 2]) -> Option<Bound> {
    b.map(|b| match b {
        Bound::Exact(v) => Bound::Exact(v),
        Bound::Range([lo, hi]) => Bound::Range([lo.max(range[0]), hi.min(range[1])]),
    })
}

fn dir(theta: f64) -> Vec3 {
    Vec3::new(theta.cos(), theta.sin(), 0.0)
}

fn candidate(t: &TaskSpec, m: &SceneManifest, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let rest = m.rest_z();
    let th = m.table_height;
    let (sx, sy) = (m.table_size.x, m.table_size.y);
    let ws = m.workspace;
    let inner = (0.05, 0.95);
    let init = |i: usize| m.cubes[i].initial;
    let at = |i: usize, p: Vec3| Pose::new(p, init(i).orientation);
    match &t.constraint {
        ConstraintDescriptor::Region { x, y, z_above } => {
            let px = sample_bound(rng, &clip(x, ws.x_range), (sx * inner.0, sx * inner.1));
            let py = sample_bound(rng, &clip(y, ws.y_range), (sy * inner.0, sy * inner.1));
            let pz = z_above.map(|b| th + b.sample_range().0).unwrap_or(rest);
            vec![at(0, Vec3::new(px, py, pz))]
        }
        ConstraintDescriptor::Height { z_above } => {
            let mut q = init(0).position;
            q.z = th + z_above.sample_range().0;
            vec![at(0, q)]
        }
        ConstraintDescriptor::RelativeOffset { dx, dy, dz, z_above } => {
            let q = init(0).position;
            let mut p = Vec3::new(
                q.x + sample_bound(rng, dx, (0.0, 0.0)),
                q.y + sample_bound(rng, dy, (0.0, 0.0)),
                q.z + sample_bound(rng, dz, (0.0, 0.0)),
            );
            if let Some(b) = z_above {
                p.z = th + b.sample_range().0;
            }
            vec![at(0, p)]
        }
        ConstraintDescriptor::OrientationFlip { .. } => {
            let flip = Quat::new(0.0, 1.0, 0.0, 0.0);
            let o = (flip * init(0).orientation).normalized().unwrap_or(flip);
            vec![Pose::new(init(0).position, o)]
        }
        ConstraintDescriptor::CornerAny { band } => {
            let (right, top) = (rng.random_bool(0.5), rng.random_bool(0.5));
            let w = band * 0.95;
            let px = if right { sx - uniform(rng, 0.0, w) } else { uniform(rng, 0.0, w) };
            let py = if top { sy - uniform(rng, 0.0, w) } else { uniform(rng, 0.0, w) };
            vec![at(0, Vec3::new(px, py, rest))]
        }
        ConstraintDescriptor::Diagonal { diagonal, tol } => {
            let s = uniform(rng, inner.0, inner.1);
            let anti = match diagonal {
                Diagonal::Main => false,
                Diagonal::Anti => true,
                Diagonal::Either => rng.random_bool(0.5),
            };
            let along = if anti { Vec3::new(sx * (1.0 - s), sy * s, rest) } else { Vec3::new(sx * s, sy * s, rest) };
            let normal = if anti { Vec3::new(sy, sx, 0.0) } else { Vec3::new(sy, -sx, 0.0) };
            let off = normal * (uniform(rng, -0.5, 0.5) * tol / normal.norm());
            vec![at(0, along + off)]
        }
        ConstraintDescriptor::OffTable { margin } => {
            let d = margin + uniform(rng, 0.005, 0.05);
            let px = if rng.random_bool(0.5) { sx + d } else { -d };
            let py = uniform(rng, sy * 0.3, sy * 0.6);
            vec![at(0, Vec3::new(px, py, rest))]
        }
        ConstraintDescriptor::ProximityToBase { max } => {
            let b = m.robot_base.position;
            let r = uniform(rng, ws.base_exclusion_radius + 0.01, max - 0.01);
            let q = b + dir(uniform(rng, 0.0, TAU)) * r;
            vec![at(0, Vec3::new(q.x, q.y, rest))]
        }
        ConstraintDescriptor::DistanceFromBase { .. } => {
            let px = uniform(rng, sx * inner.0, sx * inner.1);
            let py = uniform(rng, sy * inner.0, sy * inner.1);
            vec![at(0, Vec3::new(px, py, rest))]
        }
        ConstraintDescriptor::MultiLeftCenterRight { band, center_tol } => {
            let c = m.table_center();
            let left = Vec3::new(uniform(rng, 0.05, band - 0.02), uniform(rng, sy * 0.35, sy * 0.75), rest);
            let right = Vec3::new(sx - uniform(rng, 0.05, band - 0.02), uniform(rng, sy * 0.35, sy * 0.75), rest);
            let center = c + dir(uniform(rng, 0.0, TAU)) * uniform(rng, 0.0, center_tol * 0.5);
            vec![at(0, left), at(1, right), at(2, center)]
        }
        ConstraintDescriptor::MultiPairwiseDistance { distance, .. } => {
            let c = Vec3::new(uniform(rng, sx * 0.3, sx * 0.7), uniform(rng, sy * 0.3, sy * 0.7), rest);
            let theta = uniform(rng, 0.0, TAU);
            let r = distance / 3f64.sqrt();
            (0..3).map(|k| at(k, c + dir(theta + k as f64 * TAU / 3.0) * r)).collect()
        }
        ConstraintDescriptor::MultiRightTriangle { .. } => {
            let v = Vec3::new(uniform(rng, sx * 0.3, sx * 0.7), uniform(rng, sy * 0.3, sy * 0.7), rest);
            let theta = uniform(rng, 0.0, TAU);
            let (l1, l2) = (uniform(rng, 0.10, 0.20), uniform(rng, 0.10, 0.20));
            vec![at(0, v), at(1, v + dir(theta) * l1), at(2, v + dir(theta + FRAC_PI_2) * l2)]
        }
        ConstraintDescriptor::MultiIsosceles { .. } => {
            let a = Vec3::new(uniform(rng, sx * 0.3, sx * 0.7), uniform(rng, sy * 0.3, sy * 0.7), rest);
            let theta = uniform(rng, 0.0, TAU);
            let leg = uniform(rng, 0.15, 0.20);
            let base = uniform(rng, 0.05, leg - 0.06);
            let apex = 2.0 * (base / (2.0 * leg)).asin();
            vec![at(0, a), at(1, a + dir(theta) * leg), at(2, a + dir(theta + apex) * leg)]
        }
        ConstraintDescriptor::MultiSquareCenterCorner { .. } => {
            let c = m.table_center();
            let theta = uniform(rng, 0.0, TAU);
            let s = uniform(rng, 0.10, 0.20);
            let (u, v) = (dir(theta) * s, dir(theta + FRAC_PI_2) * s);
            vec![at(0, c + u), at(1, c + u + v), at(2, c + v)]
        }
    }
}

/// A reference goal for `t`, sampled under `seed`, that [`validate`] accepts.
/// Only the first `t.n_objects` cubes of `m` are addressed.
pub fn oracle_goal(t: &TaskSpec, m: &SceneManifest, seed: u64) -> Result<GoalSet, OracleError> {
    let m = m.for_task(t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task_salt(&t.id));
    if m.cubes.len() == t.n_objects {
        for _ in 0..ORACLE_ATTEMPTS {
            let g = GoalSet::new(candidate(t, &m, &mut rng));
            if validate(&g, t, &m, &m.workspace).map(|r| r.valid).unwrap_or(false) {
                return Ok(g);
            }
        }
    }
    Err(OracleError { task: t.id.clone() })
}

/// Perturbations that must turn a valid goal into an invalid one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Shift the first target 2 m along +x, out of the workspace.
    TranslateOut,
    /// Rotate one leg of the right angle by 20 degrees about its vertex.
    RotateLeg,
    /// Lengthen one constrained pairwise distance by 3 cm.
    ChangeDistance,
    /// Reflect the target through the initial pose, flipping every offset sign.
    ReflectOffset,
    /// Lower every target by 10 cm.
    DropHeight,
}

impl Mutation {
    pub const ALL: [Mutation; 5] =
        [Mutation::TranslateOut, Mutation::RotateLeg, Mutation::ChangeDistance, Mutation::ReflectOffset, Mutation::DropHeight];

    pub fn applies_to(self, t: &TaskSpec) -> bool {
        let c = &t.constraint;
        match self {
            Mutation::TranslateOut => true,
            Mutation::RotateLeg => matches!(
                c,
                ConstraintDescriptor::MultiRightTriangle { .. } | ConstraintDescriptor::MultiSquareCenterCorner { .. }
            ),
            Mutation::ChangeDistance => matches!(
                c,
                ConstraintDescriptor::MultiPairwiseDistance { .. }
                    | ConstraintDescriptor::MultiIsosceles { .. }
                    | ConstraintDescriptor::MultiSquareCenterCorner { .. }
            ),
            Mutation::ReflectOffset => matches!(c, ConstraintDescriptor::RelativeOffset { .. }),
            Mutation::DropHeight => c.constrains_height(),
        }
    }

    pub fn apply(self, g: &GoalSet, t: &TaskSpec, m: &SceneManifest) -> GoalSet {
        let mut out = g.clone();
        match self {
            Mutation::TranslateOut => out.targets[0].position.x += 2.0,
            Mutation::DropHeight => out.targets.iter_mut().for_each(|p| p.position.z -= 0.10),
            Mutation::ReflectOffset => {
                for (p, c) in out.targets.iter_mut().zip(&m.cubes) {
                    p.position = c.initial.position * 2.0 - p.position;
                }
            }
            Mutation::RotateLeg => {
                let (pivot, leg, other) = right_angle_legs(g, t, m);
                let pv = pivot;
                let a = out.targets[leg].position - pv;
                let b = match other {
                    Some(o) => g.targets[o].position - pv,
                    None => m.table_center() - pv,
                };
                // turn the leg away from the other one so the angle opens up
                let sign = if a.cross(b).z > 0.0 { -1.0 } else { 1.0 };
                let q = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), sign * 20f64.to_radians());
                out.targets[leg].position = pv + q.rotate(a);
            }
            Mutation::ChangeDistance => {
                let (anchor, moved) = distance_pair(g, t, m);
                let d = out.targets[moved].position - anchor;
                out.targets[moved].position = anchor + d * ((d.norm() + 0.03) / d.norm());
            }
        }
        out
    }
}

/// (vertex position, index of the leg endpoint to rotate, index of the other
/// leg endpoint or `None` when that corner is the table center).
fn right_angle_legs(g: &GoalSet, t: &TaskSpec, m: &SceneManifest) -> (Vec3, usize, Option<usize>) {
    let p: Vec<Vec3> = g.targets.iter().map(|x| x.position).collect();
    match t.constraint {
        ConstraintDescriptor::MultiSquareCenterCorner { .. } => {
            let c = m.table_center();
            let mut idx: Vec<usize> = (0..3).collect();
            idx.sort_by(|&a, &b| flat(p[a]).dist(flat(c)).total_cmp(&flat(p[b]).dist(flat(c))));
            let pivot = Vec3::new(c.x, c.y, p[idx[0]].z);
            (pivot, idx[0], Some(idx[1]))
        }
        _ => {
            let cos = vertex_cosines([p[0], p[1], p[2]]);
            let v = (0..3).min_by(|&a, &b| cos[a].abs().total_cmp(&cos[b].abs())).unwrap_or(0);
            (p[v], (v + 1) % 3, Some((v + 2) % 3))
        }
    }
}

/// (fixed endpoint, index of the target moved) for the distance mutation.
fn distance_pair(g: &GoalSet, t: &TaskSpec, m: &SceneManifest) -> (Vec3, usize) {
    let p: Vec<Vec3> = g.targets.iter().map(|x| x.position).collect();
    match t.constraint {
        ConstraintDescriptor::MultiIsosceles { .. } => {
            // the apex is the vertex shared by the two most nearly equal sides
            let s = sides([p[0], p[1], p[2]]);
            let diffs = [((s[0] - s[1]).abs(), 0), ((s[0] - s[2]).abs(), 1), ((s[1] - s[2]).abs(), 2)];
            let apex = diffs.iter().min_by(|a, b| a.0.total_cmp(&b.0)).map(|d| d.1).unwrap_or(0);
            (p[apex], (apex + 1) % 3)
        }
        ConstraintDescriptor::MultiSquareCenterCorner { .. } => {
            let c = m.table_center();
            let near = (0..3).min_by(|&a, &b| flat(p[a]).dist(flat(c)).total_cmp(&flat(p[b]).dist(flat(c)))).unwrap_or(0);
            (Vec3::new(c.x, c.y, p[near].z), near)
        }
        _ => (p[0], 1),
    }
}
