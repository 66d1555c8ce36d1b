//! Prompt construction. Wording lives in template files with `{{name}}`
//! placeholders; the built-in copies are compiled in and a directory with the
//! same file names can replace them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sandbox::Diagnostic;
use crate::scene::{Family, SceneManifest, TaskSpec};

pub const DEFAULT_LANGUAGE: &str = "python";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Goal,
    Reward,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Goal => "goal",
            SynthKind::Reward => "reward",
        }
    }

    pub fn for_family(f: Family) -> Self {
        match f {
            Family::GoalGcrl => SynthKind::Goal,
            Family::RewardMtrl => SynthKind::Reward,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "goal" => Some(SynthKind::Goal),
            "reward" => Some(SynthKind::Reward),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: String,
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSignature {
    pub kind: SynthKind,
    pub name: String,
    pub params: Vec<Param>,
    pub returns: String,
    pub docstring: String,
}

fn param(name: &str, ty: &str, doc: &str) -> Param {
    Param { name: name.into(), ty: ty.into(), doc: doc.into() }
}

impl FunctionSignature {
    /// `generate_goal(cube_pose)` for one object, `generate_goal(cube1, cube2, cube3)` for three.
    pub fn goal(n_objects: usize) -> Self {
        let params = if n_objects == 1 {
            vec![param("cube_pose", "list[float]", "Initial pose [x, y, z, qw, qx, qy, qz] of the cube.")]
        } else {
            (1..=n_objects)
                .map(|i| param(&format!("cube{i}"), "list[float]", &format!("Initial pose [x, y, z, qw, qx, qy, qz] of cube {i}.")))
                .collect()
        };
        let target = if n_objects == 1 { "the cube" } else { "each cube, in parameter order" };
        FunctionSignature {
            kind: SynthKind::Goal,
            name: "generate_goal".into(),
            params,
            returns: format!(
                "list: one target pose for {target}; each target is [x, y, z] or [x, y, z, qw, qx, qy, qz]."
            ),
            docstring: "Compute target poses that satisfy the task description.".into(),
        }
    }

    /// `compute_reward(object_pose, goal_pose, gripper_position, action)`.
    pub fn reward() -> Self {
        FunctionSignature {
            kind: SynthKind::Reward,
            name: "compute_reward".into(),
            params: vec![
                param("object_pose", "list[float]", "Current pose [x, y, z, qw, qx, qy, qz] of the cube."),
                param("goal_pose", "list[float]", "Target pose [x, y, z, qw, qx, qy, qz] of the cube."),
                param("gripper_position", "list[float]", "Current gripper position [x, y, z]."),
                param("action", "list[float]", "Joint displacement command, 7 numbers."),
            ],
            returns: "float: the task-dependent part of the reward; larger is better.".into(),
            docstring: "Compute the task-dependent reward for one step.".into(),
        }
    }

    pub fn for_task(kind: SynthKind, t: &TaskSpec) -> Self {
        match kind {
            SynthKind::Goal => Self::goal(t.n_objects),
            SynthKind::Reward => Self::reward(),
        }
    }

    pub fn check(&self) -> Result<(), PromptError> {
        if self.name.is_empty() {
            return Err(PromptError::Signature("function name is empty".into()));
        }
        if let Some(p) = self.params.iter().find(|p| p.doc.trim().is_empty()) {
            return Err(PromptError::Signature(format!("parameter {} has no docstring line", p.name)));
        }
        Ok(())
    }

    /// Python-style stub: `def` line plus docstring.
    pub fn render(&self) -> String {
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        let mut s = format!("def {}({}):\n    \"\"\"\n    {}\n", self.name, names.join(", "), self.docstring);
        if !self.params.is_empty() {
            s.push_str("\n    Args:\n");
            for p in &self.params {
                s.push_str(&format!("        {} ({}): {}\n", p.name, p.ty, p.doc));
            }
        }
        s.push_str(&format!("\n    Returns:\n        {}\n    \"\"\"", self.returns));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptError {
    SignatureMismatch { task: String, family: Family, kind: SynthKind },
    Signature(String),
    ParaphraseCount,
    Template(String),
}

impl fmt::Display for PromptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptError::SignatureMismatch { task, family, kind } => {
                write!(f, "task {task} is a {} task, a {} signature does not fit", family.as_str(), kind.as_str())
            }
            PromptError::Signature(m) => write!(f, "bad signature: {m}"),
            PromptError::ParaphraseCount => write!(f, "paraphrase count must be at least 1"),
            PromptError::Template(m) => write!(f, "template error: {m}"),
        }
    }
}

impl std::error::Error for PromptError {}

const TEMPLATE_NAMES: [&str; 10] = [
    "environment",
    "generation",
    "guidelines",
    "repair",
    "test",
    "test_guidelines",
    "test_code",
    "paraphrase",
    "code_only",
    "test_rules",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: Vec<(String, String)>,
}

impl Default for Templates {
    fn default() -> Self {
        let builtin = [
            include_str!("../data/templates/environment.txt"),
            include_str!("../data/templates/generation.txt"),
            include_str!("../data/templates/guidelines.txt"),
            include_str!("../data/templates/repair.txt"),
            include_str!("../data/templates/test.txt"),
            include_str!("../data/templates/test_guidelines.txt"),
            include_str!("../data/templates/test_code.txt"),
            include_str!("../data/templates/paraphrase.txt"),
            include_str!("../data/templates/code_only.txt"),
            include_str!("../data/templates/test_rules.txt"),
        ];
        Templates {
            texts: TEMPLATE_NAMES.iter().zip(builtin).map(|(n, t)| (n.to_string(), clean(t))).collect(),
        }
    }
}

fn clean(t: &str) -> String {
    t.replace("\r\n", "\n").trim_end_matches('\n').to_string()
}

impl Templates {
    /// Loads `<name>.txt` for every template from `dir`; missing files keep the built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Templates::default();
        for (name, text) in &mut t.texts {
            let p = dir.join(format!("{name}.txt"));
            if p.exists() {
                *text = clean(&std::fs::read_to_string(&p).map_err(|e| PromptError::Template(format!("{}: {e}", p.display())))?);
            }
        }
        Ok(t)
    }

    fn get(&self, name: &str) -> &str {
        self.texts.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str()).expect("known template name")
    }

    /// Substitutes `{{key}}` placeholders in one pass, so values containing braces are left alone.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> String {
        let tpl = self.get(name);
        let mut out = String::with_capacity(tpl.len());
        let mut rest = tpl;
        while let Some(i) = rest.find("{{") {
            out.push_str(&rest[..i]);
            let after = &rest[i + 2..];
            match after.find("}}") {
                Some(j) => {
                    let key = &after[..j];
                    match vars.iter().find(|(k, _)| *k == key) {
                        Some((_, v)) => out.push_str(v),
                        None => out.push_str(&rest[i..i + 4 + j]),
                    }
                    rest = &after[j + 2..];
                }
                None => {
                    out.push_str(&rest[i..]);
                    rest = "";
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub env_section: String,
    pub task_section: String,
    pub signature_section: String,
    pub guidelines_section: String,
    pub generation_language: String,
}

impl PromptBundle {
    pub fn render(&self, templates: &Templates) -> String {
        let mut s = templates.render(
            "generation",
            &[("environment", &self.env_section), ("task", &self.task_section), ("signature", &self.signature_section)],
        );
        if !self.guidelines_section.is_empty() {
            s.push_str("\n\n");
            s.push_str(&templates.render("guidelines", &[("guidelines", &self.guidelines_section)]));
        }
        s
    }
}

/// Meters without trailing zeros: 1.0 -> "1m", 0.78 -> "0.78m".
pub fn meters(v: f64) -> String {
    format!("{}m", num(v))
}

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn vec_text(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", "))
}

pub fn environment_section(m: &SceneManifest, lang: &str, templates: &Templates) -> String {
    let ts = m.table_size;
    let ws = &m.workspace;
    let cubes: Vec<String> = m.cubes.iter().map(|c| format!("  {}: {}", c.id, vec_text(&c.initial.to_array7()))).collect();
    let dims = format!("{} x {} x {}", meters(ts.x), meters(ts.y), meters(ts.z));
    templates.render(
        "environment",
        &[
            ("language", lang),
            ("table_dims", &dims),
            ("table_height", &meters(m.table_height)),
            ("x_lo", &num(ws.x_range[0])),
            ("x_hi", &num(ws.x_range[1])),
            ("y_lo", &num(ws.y_range[0])),
            ("y_hi", &num(ws.y_range[1])),
            ("base", &vec_text(&m.robot_base.position.to_array())),
            ("edge", &format!("{}cm", num(m.cube_edge * 100.0))),
            ("rest_z", &num(m.rest_z())),
            ("cubes", &cubes.join("\n")),
            ("reach", &num(ws.reach_radius)),
            ("exclusion", &num(ws.base_exclusion_radius)),
            ("z_lo", &num(ws.z_range[0])),
            ("z_hi", &num(ws.z_range[1])),
        ],
    )
}

pub fn build_generation_prompt(
    m: &SceneManifest,
    t: &TaskSpec,
    sig: &FunctionSignature,
    guidelines: &[String],
    lang: &str,
    templates: &Templates,
) -> Result<PromptBundle, PromptError> {
    sig.check()?;
    if SynthKind::for_family(t.family) != sig.kind {
        return Err(PromptError::SignatureMismatch { task: t.id.clone(), family: t.family, kind: sig.kind });
    }
    Ok(PromptBundle {
        env_section: environment_section(&m.for_task(t), lang, templates),
        task_section: t.description.clone(),
        signature_section: sig.render(),
        guidelines_section: guidelines.join("\n"),
        generation_language: lang.to_string(),
    })
}

fn fence(lang: &str) -> String {
    lang.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

pub fn build_repair_prompt(d: &Diagnostic, source: &str, lang: &str, templates: &Templates) -> String {
    templates.render(
        "repair",
        &[("language", lang), ("diagnostic", &d.to_string()), ("source", source.trim_end_matches('\n')), ("fence", &fence(lang))],
    )
}

pub fn build_test_prompt(source: &str, guidelines: &[String], lang: &str, templates: &Templates) -> String {
    let mut parts = vec![templates.render("test", &[("language", lang)])];
    if !guidelines.is_empty() {
        parts.push(templates.render("test_guidelines", &[("guidelines", &guidelines.join("\n"))]));
    }
    parts.push(templates.render("test_code", &[("source", source.trim_end_matches('\n')), ("fence", &fence(lang))]));
    parts.join("\n\n")
}

pub fn build_paraphrase_prompt(t: &TaskSpec, n: usize, templates: &Templates) -> Result<String, PromptError> {
    if n == 0 {
        return Err(PromptError::ParaphraseCount);
    }
    let one = n == 1;
    let count = n.to_string();
    Ok(templates.render(
        "paraphrase",
        &[
            ("n", &count),
            ("noun", if one { "variant" } else { "variants" }),
            ("lines", if one { "line" } else { "lines" }),
            ("variant", "variant"),
            ("task", &t.description),
        ],
    ))
}
