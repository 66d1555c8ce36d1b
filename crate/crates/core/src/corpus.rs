//! Scripted synthesis scenarios and their replay fixtures.
//!
//! A scenario names a task, a synthesis kind and the completions an LLM would
//! return, in order. Recording runs the real loop against a scripted backend
//! and stores each exchange under `<replay>/<scenario>/<digest>.json`; replay
//! then reproduces the outcome without the script. Scenarios flagged `default`
//! plus the paraphrase entries are also recorded into `<replay>/default`, the
//! fixture set the CLI uses when none is given.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::codegen::{synthesize, SynthError, SynthesisConfig, SynthesisOutcome};
use crate::llm::{ChatRequest, LlmBackend, RecordingBackend, ReplayBackend, ScriptedBackend, DEFAULT_MODEL};
use crate::prompt::{build_paraphrase_prompt, SynthKind, Templates};
use crate::sandbox::{spawn_worker, WorkerConfig};
use crate::scene::{default_manifest, find_task};

pub const SCENARIOS_TOML: &str = include_str!("../fixtures/scenarios.toml");
pub const DEFAULT_SET: &str = "default";
/// Timestamp written into recorded fixtures so they are reproducible.
pub const FIXTURE_TIMESTAMP: u64 = 0;

pub fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn replay_root() -> PathBuf {
    fixtures_root().join("replay")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: String,
    pub kind: SynthKind,
    #[serde(default = "default_repairs")]
    pub max_repairs: usize,
    pub timeout_ms: Option<u64>,
    #[serde(default)]
    pub default: bool,
    /// unrecoverable, clean or one_bug; used for corpus composition checks
    pub class: String,
    pub completions: Vec<String>,
}

fn default_repairs() -> usize {
    crate::codegen::DEFAULT_MAX_REPAIRS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paraphrase {
    pub task: String,
    pub n: usize,
    pub completion: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<Scenario>,
    #[serde(rename = "paraphrase", default)]
    pub paraphrases: Vec<Paraphrase>,
}

pub fn load_corpus(text: &str) -> Result<Corpus, String> {
    let c: Corpus = toml::from_str(text).map_err(|e| e.to_string())?;
    for s in &c.scenarios {
        if find_task(&s.task).is_none() {
            return Err(format!("scenario {}: unknown task {}", s.name, s.task));
        }
    }
    Ok(c)
}

pub fn corpus() -> Corpus {
    load_corpus(SCENARIOS_TOML).expect("bundled scenarios parse")
}

impl Scenario {
    pub fn config(&self) -> SynthesisConfig {
        let t = find_task(&self.task).expect("checked on load");
        let mut cfg = SynthesisConfig::new(self.kind, t);
        cfg.max_repairs = self.max_repairs;
        if let Some(ms) = self.timeout_ms {
            cfg.timeout = Duration::from_millis(ms);
        }
        cfg
    }

    /// Runs the loop against the default manifest, an in-process worker and `backend`.
    pub fn run(&self, backend: &dyn LlmBackend) -> Result<SynthesisOutcome, SynthError> {
        let t = find_task(&self.task).expect("checked on load");
        let cfg = self.config();
        let wc = WorkerConfig { call_timeout: cfg.timeout, ..WorkerConfig::default() };
        let mut worker = spawn_worker(&wc)?;
        synthesize(t, &default_manifest(), &cfg, backend, &mut worker, &Templates::default())
    }

    pub fn replay(&self, replay: &Path) -> Result<SynthesisOutcome, SynthError> {
        self.run(&ReplayBackend { dir: replay.join(&self.name) })
    }
}

fn recording(dir: PathBuf, completions: Vec<String>) -> (RecordingBackend, Arc<ScriptedBackend>) {
    let script = Arc::new(ScriptedBackend::new(completions));
    let mut rec = RecordingBackend::new(Box::new(Arc::clone(&script)), dir);
    rec.timestamp = Some(FIXTURE_TIMESTAMP);
    (rec, script)
}

/// Rewrites every fixture under `replay`. Fails if a scenario does not consume
/// exactly its scripted completions.
pub fn record_corpus(c: &Corpus, replay: &Path) -> Result<(), String> {
    if replay.exists() {
        std::fs::remove_dir_all(replay).map_err(|e| e.to_string())?;
    }
    for s in &c.scenarios {
        let mut dirs = vec![replay.join(&s.name)];
        if s.default {
            dirs.push(replay.join(DEFAULT_SET));
        }
        for dir in dirs {
            let (rec, script) = recording(dir, s.completions.clone());
            s.run(&rec).map_err(|e| format!("{}: {e}", s.name))?;
            let n = s.completions.len();
            let used = n - script.remaining();
            if used != n {
                return Err(format!("{}: loop used {used} of {n} scripted completions", s.name));
            }
        }
    }
    let templates = Templates::default();
    for p in &c.paraphrases {
        let t = find_task(&p.task).ok_or_else(|| format!("paraphrase: unknown task {}", p.task))?;
        let prompt = build_paraphrase_prompt(t, p.n, &templates).map_err(|e| e.to_string())?;
        let (rec, _) = recording(replay.join(DEFAULT_SET), vec![p.completion.clone()]);
        rec.complete(&ChatRequest::user(DEFAULT_MODEL, &prompt)).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// One line per scenario: name, status, reason, attempt count and the
/// phase:status of each attempt.
pub fn outcome_row(name: &str, o: &SynthesisOutcome) -> String {
    let reason = o.rejection_reason.map(|r| r.as_str()).unwrap_or("-");
    let trail: Vec<String> = o.attempts.iter().map(|a| format!("{}:{}", a.phase.as_str(), a.result.status())).collect();
    let status = if o.accepted() { "accepted" } else { "rejected" };
    format!("{name}\t{status}\t{reason}\t{}\t{}", o.attempts.len(), trail.join(","))
}

pub fn outcome_table(c: &Corpus, replay: &Path) -> Result<(String, Vec<SynthesisOutcome>), String> {
    let mut rows = String::from("scenario\tstatus\treason\tattempts\ttrail\n");
    let mut outcomes = Vec::new();
    for s in &c.scenarios {
        let o = s.replay(replay).map_err(|e| format!("{}: {e}", s.name))?;
        rows.push_str(&outcome_row(&s.name, &o));
        rows.push('\n');
        outcomes.push(o);
    }
    Ok((rows, outcomes))
}
