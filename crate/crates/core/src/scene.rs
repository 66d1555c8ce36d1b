//! Table, robot and cube geometry, workspace predicates, and the task catalog.

use std::fmt;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::ConstraintDescriptor;
use crate::{Pose, Quat, Vec3};

pub const DEFAULT_MANIFEST_TOML: &str = include_str!("../data/manifest.toml");
pub const TASKS_TOML: &str = include_str!("../data/tasks.toml");

/// Initial-pose jitter amplitude along x and y, meters.
pub const JITTER: f64 = 0.05;

const Z_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceBounds {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    /// Horizontal distance from the robot base.
    pub reach_radius: f64,
    pub base_exclusion_radius: f64,
}

impl WorkspaceBounds {
    pub fn for_table(table_size: Vec3, table_height: f64) -> Self {
        WorkspaceBounds {
            x_range: [0.0, table_size.x],
            y_range: [0.0, table_size.y],
            z_range: [table_height, table_height + 0.5],
            reach_radius: 0.85,
            base_exclusion_radius: 0.10,
        }
    }

    fn check(&self) -> Result<(), ManifestError> {
        for (name, r) in [("x_range", self.x_range), ("y_range", self.y_range), ("z_range", self.z_range)] {
            if !(r[0] < r[1]) {
                return Err(ManifestError::invariant(format!("workspace {name} must be non-empty")));
            }
        }
        if !(self.reach_radius > self.base_exclusion_radius && self.base_exclusion_radius > 0.0) {
            return Err(ManifestError::invariant("workspace reach_radius > base_exclusion_radius > 0"));
        }
        Ok(())
    }

    /// True when `inner` lies inside `self` on every axis and radius.
    pub fn contains_bounds(&self, inner: &WorkspaceBounds) -> bool {
        let sub = |a: [f64; 2], b: [f64; 2]| a[0] <= b[0] && b[1] <= a[1];
        sub(self.x_range, inner.x_range)
            && sub(self.y_range, inner.y_range)
            && sub(self.z_range, inner.z_range)
            && inner.reach_radius <= self.reach_radius
            && inner.base_exclusion_radius >= self.base_exclusion_radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub id: String,
    pub initial: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    pub table_size: Vec3,
    pub table_height: f64,
    pub robot_base: Pose,
    pub cube_edge: f64,
    pub cubes: Vec<Cube>,
    pub origin_note: String,
    pub workspace: WorkspaceBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifestError {
    /// The document is not well-formed or lacks a field. The message names the location.
    Parse(String),
    /// A documented invariant does not hold.
    Invariant(String),
}

impl ManifestError {
    fn invariant(msg: impl Into<String>) -> Self {
        ManifestError::Invariant(msg.into())
    }
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::Parse(m) => write!(f, "manifest parse error: {m}"),
            ManifestError::Invariant(m) => write!(f, "manifest invariant violated: {m}"),
        }
    }
}

impl std::error::Error for ManifestError {}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCube {
    id: String,
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkspace {
    x_range: [f64; 2],
    y_range: [f64; 2],
    z_range: [f64; 2],
    reach_radius: f64,
    base_exclusion_radius: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    origin_note: String,
    table_size: [f64; 3],
    table_height: f64,
    cube_edge: f64,
    robot_base: RawPose,
    #[serde(skip_serializing_if = "Option::is_none")]
    workspace: Option<RawWorkspace>,
    cubes: Vec<RawCube>,
}

fn pose_from(position: [f64; 3], o: [f64; 4]) -> Pose {
    Pose::new(Vec3::from_array(position), Quat::new(o[0], o[1], o[2], o[3]))
}

fn wxyz(q: Quat) -> [f64; 4] {
    [q.w, q.x, q.y, q.z]
}

impl SceneManifest {
    /// z of a cube resting on the table top.
    pub fn rest_z(&self) -> f64 {
        self.table_height + self.cube_edge / 2.0
    }

    pub fn table_center(&self) -> Vec3 {
        Vec3::new(self.table_size.x / 2.0, self.table_size.y / 2.0, self.rest_z())
    }

    pub fn on_footprint(&self, p: Vec3) -> bool {
        (0.0..=self.table_size.x).contains(&p.x) && (0.0..=self.table_size.y).contains(&p.y)
    }

    /// Horizontal distance from `p` to the table footprint rectangle (zero inside).
    pub fn distance_outside_footprint(&self, p: Vec3) -> f64 {
        let dx = (0.0 - p.x).max(p.x - self.table_size.x).max(0.0);
        let dy = (0.0 - p.y).max(p.y - self.table_size.y).max(0.0);
        dx.hypot(dy)
    }

    pub fn initial_poses(&self) -> Vec<Pose> {
        self.cubes.iter().map(|c| c.initial).collect()
    }

    /// The scene a task runs in: only the first `n_objects` cubes.
    pub fn for_task(&self, t: &TaskSpec) -> SceneManifest {
        let mut m = self.clone();
        m.cubes.truncate(t.n_objects);
        m
    }

    /// Seeded uniform jitter of every cube's initial x and y by up to `amount`.
    /// Cubes stay on the table footprint.
    pub fn with_jitter(&self, seed: u64, amount: f64) -> SceneManifest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = self.clone();
        if amount <= 0.0 {
            return m;
        }
        for c in &mut m.cubes {
            let p = &mut c.initial.position;
            p.x = (p.x + rng.random_range(-amount..=amount)).clamp(0.0, self.table_size.x);
            p.y = (p.y + rng.random_range(-amount..=amount)).clamp(0.0, self.table_size.y);
        }
        m
    }

    pub fn check(&self) -> Result<(), ManifestError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ManifestError::invariant(format!("{name} must be positive, got {v}")))
            }
        };
        positive("table_size.x", self.table_size.x)?;
        positive("table_size.y", self.table_size.y)?;
        positive("table_size.z", self.table_size.z)?;
        positive("table_height", self.table_height)?;
        positive("cube_edge", self.cube_edge)?;
        if (self.table_size.z - self.table_height).abs() > Z_EPS {
            return Err(ManifestError::invariant("table_size z must equal table_height"));
        }
        self.robot_base.check().map_err(|e| ManifestError::invariant(format!("robot_base: {e}")))?;
        if self.cubes.is_empty() {
            return Err(ManifestError::invariant("at least one cube is required"));
        }
        for (i, c) in self.cubes.iter().enumerate() {
            if self.cubes[..i].iter().any(|o| o.id == c.id) {
                return Err(ManifestError::invariant(format!("duplicate cube id '{}'", c.id)));
            }
            c.initial.check().map_err(|e| ManifestError::invariant(format!("cube '{}': {e}", c.id)))?;
            if (c.initial.position.z - self.rest_z()).abs() > Z_EPS {
                return Err(ManifestError::invariant(format!(
                    "cube '{}' initial z must equal table_height + cube_edge/2",
                    c.id
                )));
            }
            if !self.on_footprint(c.initial.position) {
                return Err(ManifestError::invariant(format!("cube '{}' must start on the table footprint", c.id)));
            }
        }
        self.workspace.check()
    }

    pub fn to_toml(&self) -> String {
        let ws = self.workspace;
        let raw = RawManifest {
            origin_note: self.origin_note.clone(),
            table_size: self.table_size.to_array(),
            table_height: self.table_height,
            cube_edge: self.cube_edge,
            robot_base: RawPose {
                position: self.robot_base.position.to_array(),
                orientation: wxyz(self.robot_base.orientation),
            },
            workspace: Some(RawWorkspace {
                x_range: ws.x_range,
                y_range: ws.y_range,
                z_range: ws.z_range,
                reach_radius: ws.reach_radius,
                base_exclusion_radius: ws.base_exclusion_radius,
            }),
            cubes: self
                .cubes
                .iter()
                .map(|c| RawCube {
                    id: c.id.clone(),
                    position: c.initial.position.to_array(),
                    orientation: wxyz(c.initial.orientation),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("manifest serializes")
    }
}

/// Parses a manifest document and checks every invariant.
pub fn load_manifest(text: &str) -> Result<SceneManifest, ManifestError> {
    let raw: RawManifest = toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string().trim_end().to_string()))?;
    let table_size = Vec3::from_array(raw.table_size);
    let workspace = match raw.workspace {
        Some(w) => WorkspaceBounds {
            x_range: w.x_range,
            y_range: w.y_range,
            z_range: w.z_range,
            reach_radius: w.reach_radius,
            base_exclusion_radius: w.base_exclusion_radius,
        },
        None => WorkspaceBounds::for_table(table_size, raw.table_height),
    };
    let m = SceneManifest {
        table_size,
        table_height: raw.table_height,
        robot_base: pose_from(raw.robot_base.position, raw.robot_base.orientation),
        cube_edge: raw.cube_edge,
        cubes: raw.cubes.into_iter().map(|c| Cube { id: c.id, initial: pose_from(c.position, c.orientation) }).collect(),
        origin_note: raw.origin_note,
        workspace,
    };
    m.check()?;
    Ok(m)
}

/// The bundled tabletop scene.
pub fn default_manifest() -> SceneManifest {
    static M: OnceLock<SceneManifest> = OnceLock::new();
    M.get_or_init(|| load_manifest(DEFAULT_MANIFEST_TOML).expect("bundled manifest is valid")).clone()
}

/// Inside the x/y/z ranges and within the reachable annulus around the robot base.
pub fn within_workspace(p: &Pose, m: &SceneManifest, b: &WorkspaceBounds) -> bool {
    let q = p.position;
    let inside = |r: [f64; 2], v: f64| v >= r[0] - Z_EPS && v <= r[1] + Z_EPS;
    let d = q.dist_xy(m.robot_base.position);
    q.is_finite()
        && inside(b.x_range, q.x)
        && inside(b.y_range, q.y)
        && inside(b.z_range, q.z)
        && d <= b.reach_radius
        && d >= b.base_exclusion_radius
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GoalGcrl,
    RewardMtrl,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::GoalGcrl => "goal_gcrl",
            Family::RewardMtrl => "reward_mtrl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub family: Family,
    pub description: String,
    pub n_objects: usize,
    #[serde(default)]
    pub relative: bool,
    pub constraint: ConstraintDescriptor,
    /// Alternative phrasings and translations shipped with the catalog.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    task: Vec<TaskSpec>,
}

/// Parses a task catalog document.
pub fn load_catalog(text: &str) -> Result<Vec<TaskSpec>, ManifestError> {
    let raw: RawCatalog = toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string().trim_end().to_string()))?;
    for (i, t) in raw.task.iter().enumerate() {
        if raw.task[..i].iter().any(|o| o.id == t.id) {
            return Err(ManifestError::invariant(format!("duplicate task id '{}'", t.id)));
        }
        t.constraint.check().map_err(|e| ManifestError::invariant(format!("task {}: {e}", t.id)))?;
        if t.constraint.n_objects() != t.n_objects {
            return Err(ManifestError::invariant(format!(
                "task {}: constraint {} addresses {} objects, task has {}",
                t.id,
                t.constraint.kind(),
                t.constraint.n_objects(),
                t.n_objects
            )));
        }
    }
    Ok(raw.task)
}

pub fn task_catalog() -> &'static [TaskSpec] {
    static C: OnceLock<Vec<TaskSpec>> = OnceLock::new();
    C.get_or_init(|| load_catalog(TASKS_TOML).expect("bundled catalog is valid"))
}

pub fn find_task(id: &str) -> Option<&'static TaskSpec> {
    task_catalog().iter().find(|t| t.id == id)
}

/// Per-object target poses, in the order of the manifest's cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pub targets: Vec<Pose>,
}

impl GoalSet {
    pub fn new(targets: Vec<Pose>) -> Self {
        GoalSet { targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Reads the value returned by a goal function: a list of 3- or
    /// 7-vectors, or a single bare vector when one object is addressed.
    pub fn from_json(v: &serde_json::Value, n_objects: usize) -> Result<GoalSet, String> {
        let items = v.as_array().ok_or_else(|| format!("expected a list of poses, got {}", json_kind(v)))?;
        let bare = n_objects == 1 && !items.is_empty() && items.iter().all(|x| x.is_number());
        let rows: Vec<&serde_json::Value> = if bare { vec![v] } else { items.iter().collect() };
        if rows.len() != n_objects {
            return Err(format!("expected {n_objects} target pose(s), got {}", rows.len()));
        }
        let mut targets = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let nums = row
                .as_array()
                .and_then(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
                .ok_or_else(|| format!("target {i}: expected a list of numbers, got {}", json_kind(row)))?;
            targets.push(Pose::from_slice(&nums).map_err(|e| format!("target {i}: {e}"))?);
        }
        Ok(GoalSet { targets })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(self.targets.iter().map(|p| serde_json::json!(p.to_array7())).collect())
    }
}

fn json_kind(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "a boolean",
        serde_json::Value::Number(_) => "a number",
        serde_json::Value::String(_) => "a string",
        serde_json::Value::Array(_) => "a list",
        serde_json::Value::Object(_) => "a mapping",
    }
}
