//! Run configuration and run-directory layout shared by the `larg` binary.
//!
//! ```text
//! <out>/synth/<task>-<kind>/     audit trail of one synthesis (see codegen::write_audit)
//! <out>/paraphrases/<id>.txt     one variant per line, addressed as <id>#<k>
//! <out>/reports/<suite>-seed<seed>.<csv|md>
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::codegen::{audit_dir, read_outcome, synthesize, write_audit, RejectionReason, SynthesisConfig, SynthesisOutcome};
use crate::corpus::{replay_root, DEFAULT_SET};
use crate::llm::{HttpBackend, LlmBackend, LlmError, RecordingBackend, ReplayBackend};
use crate::prompt::{SynthKind, Templates};
use crate::sandbox::{spawn_worker, WorkerConfig};
use crate::scene::{find_task, SceneManifest, TaskSpec};
use crate::sim::Artifact;

pub const EXIT_OK: i32 = 0;
/// Internal failure: I/O or a sandbox that died.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Live,
    Record,
    Replay,
}

impl BackendMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "live" => Some(BackendMode::Live),
            "record" => Some(BackendMode::Record),
            "replay" => Some(BackendMode::Replay),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub code: i32,
    pub message: String,
}

impl RunError {
    pub fn usage(m: impl Into<String>) -> Self {
        RunError { code: EXIT_USAGE, message: m.into() }
    }

    pub fn failure(m: impl Into<String>) -> Self {
        RunError { code: EXIT_FAILURE, message: m.into() }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for RunError {}

impl From<LlmError> for RunError {
    fn from(e: LlmError) -> Self {
        RunError { code: EXIT_BACKEND, message: e.to_string() }
    }
}

/// Fixture directory used by replay when neither a flag nor `LARG_FIXTURE_DIR` names one.
pub fn default_fixture_dir() -> PathBuf {
    std::env::var_os("LARG_FIXTURE_DIR").map(PathBuf::from).unwrap_or_else(|| replay_root().join(DEFAULT_SET))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: BackendMode,
    pub fixture_dir: PathBuf,
    pub max_repairs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker executable; the in-process interpreter when `None`.
    pub worker: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            backend: BackendMode::Replay,
            fixture_dir: default_fixture_dir(),
            max_repairs: crate::codegen::DEFAULT_MAX_REPAIRS,
            seed: 0,
            out_dir: out_dir.into(),
            worker: None,
        }
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.out_dir.join("synth")
    }

    pub fn paraphrase_dir(&self) -> PathBuf {
        self.out_dir.join("paraphrases")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }

    pub fn worker_config(&self) -> WorkerConfig {
        match &self.worker {
            Some(p) => WorkerConfig::process(p, Vec::new()),
            None => WorkerConfig::default(),
        }
    }

    pub fn backend(&self) -> Result<Box<dyn LlmBackend>, RunError> {
        Ok(match self.backend {
            BackendMode::Replay => {
                if !self.fixture_dir.is_dir() {
                    return Err(RunError::usage(format!("fixture directory {} does not exist", self.fixture_dir.display())));
                }
                Box::new(ReplayBackend { dir: self.fixture_dir.clone() })
            }
            BackendMode::Live => Box::new(HttpBackend::from_env()?),
            BackendMode::Record => Box::new(RecordingBackend::new(Box::new(HttpBackend::from_env()?), &self.fixture_dir)),
        })
    }
}

/// Splits `id#k` and resolves the description: `#0` or no suffix is the
/// catalog sentence, `#1..` index the catalog variants followed by the stored
/// paraphrases of the task.
pub fn resolve_task(label: &str, paraphrase_dir: &Path) -> Result<TaskSpec, RunError> {
    let (id, variant) = match label.split_once('#') {
        Some((id, k)) => (id, Some(k)),
        None => (label, None),
    };
    let t = find_task(id).ok_or_else(|| RunError::usage(format!("unknown task id '{id}'")))?;
    let Some(k) = variant else {
        return Ok(t.clone());
    };
    let k: usize = k.parse().map_err(|_| RunError::usage(format!("bad variant index in '{label}'")))?;
    if k == 0 {
        return Ok(t.clone());
    }
    let mut all = t.variants.clone();
    all.extend(read_paraphrases(paraphrase_dir, id)?);
    let text = all.get(k - 1).ok_or_else(|| {
        RunError::usage(format!("task {id} has {} variants, '{label}' is out of range", all.len()))
    })?;
    let mut t = t.clone();
    t.description = text.clone();
    Ok(t)
}

pub fn paraphrase_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.txt"))
}

pub fn read_paraphrases(dir: &Path, id: &str) -> Result<Vec<String>, RunError> {
    let p = paraphrase_file(dir, id);
    if !p.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&p).map_err(|e| RunError::failure(format!("{}: {e}", p.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn write_paraphrases(dir: &Path, id: &str, variants: &[String]) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::failure(format!("{}: {e}", dir.display())))?;
    let p = paraphrase_file(dir, id);
    let mut text = variants.join("\n");
    text.push('\n');
    std::fs::write(&p, text).map_err(|e| RunError::failure(format!("{}: {e}", p.display())))?;
    Ok(p)
}

fn strip_list_marker(line: &str) -> &str {
    let l = line.trim();
    let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
    let l = if digits > 0 {
        match l[digits..].strip_prefix('.').or_else(|| l[digits..].strip_prefix(')')) {
            Some(rest) => rest.trim_start(),
            None => l,
        }
    } else {
        l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")).unwrap_or(l)
    };
    let quoted = l.len() >= 2 && l.starts_with('"') && l.ends_with('"');
    if quoted {
        &l[1..l.len() - 1]
    } else {
        l
    }
}

/// First `n` non-empty lines of a paraphrase completion, without list markers
/// or surrounding quotes.
pub fn parse_variants(completion: &str, n: usize) -> Result<Vec<String>, String> {
    let lines: Vec<String> =
        completion.lines().map(strip_list_marker).filter(|l| !l.is_empty()).map(String::from).collect();
    if lines.len() < n {
        return Err(format!("asked for {n} variants, completion has {}", lines.len()));
    }
    Ok(lines.into_iter().take(n).collect())
}

/// Runs the loop for `label` (an id or `id#k`), writes its audit trail under
/// the run directory and returns the outcome. The outcome carries the label as
/// its task so variants keep separate audit directories.
pub fn synth_task(
    label: &str,
    kind: SynthKind,
    m: &SceneManifest,
    cfg: &RunConfig,
    backend: &dyn LlmBackend,
) -> Result<(SynthesisOutcome, PathBuf), RunError> {
    let t = resolve_task(label, &cfg.paraphrase_dir())?;
    if SynthKind::for_family(t.family) != kind {
        return Err(RunError::usage(format!("task {} takes a {} function", t.id, SynthKind::for_family(t.family).as_str())));
    }
    let mut sc = SynthesisConfig::new(kind, &t);
    sc.max_repairs = cfg.max_repairs;
    sc.seed = cfg.seed;
    let mut wc = cfg.worker_config();
    wc.call_timeout = sc.timeout;
    let mut worker = spawn_worker(&wc).map_err(|e| RunError::failure(e.to_string()))?;
    let mut o = synthesize(&t, m, &sc, backend, &mut worker, &Templates::default())
        .map_err(|e| RunError::failure(e.to_string()))?;
    o.task = label.to_string();
    let dir = audit_dir(&cfg.synth_dir(), label, kind);
    write_audit(&dir, &o).map_err(|e| RunError::failure(format!("{}: {e}", dir.display())))?;
    Ok((o, dir))
}

pub fn exit_code(o: &SynthesisOutcome) -> i32 {
    match o.rejection_reason {
        _ if o.accepted() => EXIT_OK,
        Some(RejectionReason::BackendError) => EXIT_BACKEND,
        _ => EXIT_REJECTED,
    }
}

/// Artifacts for `tasks` from the audit trails under `synth_dir`. Tasks
/// without an accepted outcome are marked failed.
pub fn load_artifacts(synth_dir: &Path, tasks: &[&TaskSpec]) -> BTreeMap<String, Artifact> {
    tasks
        .iter()
        .map(|t| {
            let kind = SynthKind::for_family(t.family);
            let art = match read_outcome(&audit_dir(synth_dir, &t.id, kind)) {
                Ok(o) if o.accepted() => match (kind, o.source) {
                    (SynthKind::Goal, Some(s)) => Artifact::Goal(s),
                    (SynthKind::Reward, Some(s)) => Artifact::Reward(s),
                    _ => Artifact::Failed,
                },
                _ => Artifact::Failed,
            };
            (t.id.clone(), art)
        })
        .collect()
}
