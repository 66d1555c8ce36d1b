//! Generation, execution on placeholder inputs, repair on exception, functional
//! test, accept or reject. Every exchange is kept for the audit trail.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::llm::{extract_code, ChatRequest, LlmBackend, LlmError, DEFAULT_MODEL};
use crate::prompt::{
    build_generation_prompt, build_repair_prompt, build_test_prompt, FunctionSignature, PromptError, SynthKind,
    Templates, DEFAULT_LANGUAGE,
};
use crate::sandbox::{CallResult, Diagnostic, SandboxError, WorkerHandle, DEFAULT_CALL_TIMEOUT};
use crate::scene::{GoalSet, SceneManifest, TaskSpec};
use crate::validator::{oracle_goal, validate, ValidationReport};
use crate::Pose;

pub const DEFAULT_MAX_REPAIRS: usize = 3;

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub max_repairs: usize,
    pub kind: SynthKind,
    pub signature: FunctionSignature,
    pub guidelines: Vec<String>,
    pub timeout: Duration,
    pub seed: u64,
    pub model: String,
    pub language: String,
}

impl SynthesisConfig {
    pub fn new(kind: SynthKind, t: &TaskSpec) -> Self {
        SynthesisConfig {
            max_repairs: DEFAULT_MAX_REPAIRS,
            kind,
            signature: FunctionSignature::for_task(kind, t),
            guidelines: Vec::new(),
            timeout: DEFAULT_CALL_TIMEOUT,
            seed: 0,
            model: DEFAULT_MODEL.to_string(),
            language: DEFAULT_LANGUAGE.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    RepairBudgetExhausted,
    FunctionalTestFailed,
    ExtractionFailed,
    BackendError,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::RepairBudgetExhausted => "repair_budget_exhausted",
            RejectionReason::FunctionalTestFailed => "functional_test_failed",
            RejectionReason::ExtractionFailed => "extraction_failed",
            RejectionReason::BackendError => "backend_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Generation,
    Repair,
    Test,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Generation => "generation",
            Phase::Repair => "repair",
            Phase::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub phase: Phase,
    pub prompt_digest: String,
    pub completion_digest: String,
    pub result: CallResult,
    #[serde(skip)]
    pub prompt: String,
    #[serde(skip)]
    pub completion: String,
    /// Extracted code; for the test phase the test source.
    #[serde(skip)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOutcome {
    pub task: String,
    pub kind: SynthKind,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<RejectionReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub attempts: Vec<Attempt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_source: Option<String>,
    /// Last code that executed on the placeholder inputs, accepted or not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_source: Option<String>,
    /// Goal kind only: validation of the output on the placeholder inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

impl SynthesisOutcome {
    pub fn accepted(&self) -> bool {
        self.status == Status::Accepted
    }

    /// Code executed without error on the placeholder inputs after the repair loop.
    pub fn executable(&self) -> bool {
        self.executed_source.is_some()
    }

    /// Generated goals satisfied the task constraints.
    pub fn valid(&self) -> bool {
        self.validation.as_ref().is_some_and(|v| v.valid)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("outcomes serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug)]
pub enum SynthError {
    Prompt(PromptError),
    Sandbox(SandboxError),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::Prompt(e) => write!(f, "{e}"),
            SynthError::Sandbox(e) => write!(f, "sandbox: {e}"),
        }
    }
}

impl std::error::Error for SynthError {}

impl From<PromptError> for SynthError {
    fn from(e: PromptError) -> Self {
        SynthError::Prompt(e)
    }
}

impl From<SandboxError> for SynthError {
    fn from(e: SandboxError) -> Self {
        SynthError::Sandbox(e)
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Goal kind: the initial 7-vector pose of each addressed cube. Reward kind:
/// object resting at the table center, gripper 0.1 m above it, the task's
/// oracle goal (or the object pose when there is none) and a zero action.
pub fn placeholder_inputs(kind: SynthKind, t: &TaskSpec, m: &SceneManifest, seed: u64) -> Vec<Value> {
    match kind {
        SynthKind::Goal => m.for_task(t).initial_poses().iter().map(|p| json!(p.to_array7())).collect(),
        SynthKind::Reward => {
            let object = Pose::at(m.table_center());
            let gripper = object.position + crate::Vec3::new(0.0, 0.0, 0.1);
            let goal = oracle_goal(t, m, seed).ok().and_then(|g| g.targets.first().copied()).unwrap_or(object);
            vec![json!(object.to_array7()), json!(goal.to_array7()), json!(gripper.to_array()), json!(vec![0.0f64; 7])]
        }
    }
}

/// Python truthiness of a JSON value.
pub fn truthy(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Number(n) => n.as_f64().is_some_and(|x| x != 0.0),
        Value::String(s) => !s.is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
    }
}

/// Name of the first `def test_*` function in `source`.
pub fn test_entry(source: &str) -> Option<String> {
    source.lines().find_map(|l| {
        let rest = l.strip_prefix("def ")?;
        let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        name.starts_with("test_").then_some(name)
    })
}

/// Runs the test in the target's namespace. Ok iff nothing was raised and the
/// test returned a truthy value or None.
pub fn run_functional_test(
    worker: &mut WorkerHandle,
    test_source: &str,
    target_source: &str,
    timeout: Duration,
    seed: u64,
) -> Result<CallResult, SandboxError> {
    let Some(entry) = test_entry(test_source) else {
        return Ok(CallResult::Error { diagnostic: Diagnostic::new("NameError", "no test_ function in the test source", "") });
    };
    let combined = format!("{}\n\n{}\n", target_source.trim_end(), test_source.trim_end());
    let loaded = worker.load_source(&combined, &entry)?;
    if !loaded.is_ok() {
        return Ok(loaded);
    }
    let res = worker.call_entry(&[], timeout, Some(seed))?;
    if let CallResult::Ok { value } = &res {
        if !value.is_null() && !truthy(value) {
            return Ok(CallResult::Error {
                diagnostic: Diagnostic::new("AssertionError", format!("{entry} returned {value}"), ""),
            });
        }
    }
    Ok(res)
}

/// Rejects executions whose return value has the wrong shape for the kind.
fn check_output(kind: SynthKind, t: &TaskSpec, res: CallResult) -> CallResult {
    let CallResult::Ok { value } = &res else { return res };
    let problem = match kind {
        SynthKind::Goal => GoalSet::from_json(value, t.n_objects).err(),
        SynthKind::Reward => match value.as_f64() {
            Some(x) if x.is_finite() => None,
            _ => Some(format!("reward must be a finite number, got {value}")),
        },
    };
    match problem {
        None => res,
        Some(msg) => CallResult::Error { diagnostic: Diagnostic::new("TypeError", msg, "") },
    }
}

fn test_guidelines(cfg: &SynthesisConfig, args: &[Value], templates: &Templates) -> Vec<String> {
    let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
    templates
        .render("test_rules", &[("entry", &cfg.signature.name), ("args", &args.join(", "))])
        .lines()
        .map(str::to_string)
        .collect()
}

struct Run<'a> {
    t: &'a TaskSpec,
    cfg: &'a SynthesisConfig,
    attempts: Vec<Attempt>,
}

impl Run<'_> {
    fn ask(&self, backend: &dyn LlmBackend, prompt: &str) -> Result<String, LlmError> {
        backend.complete(&ChatRequest::user(&self.cfg.model, prompt))
    }

    fn log(&mut self, phase: Phase, prompt: &str, completion: &str, source: &str, result: CallResult) {
        self.attempts.push(Attempt {
            phase,
            prompt_digest: ChatRequest::user(&self.cfg.model, prompt).digest(),
            completion_digest: sha256_hex(completion),
            result,
            prompt: prompt.to_string(),
            completion: completion.to_string(),
            source: source.to_string(),
        });
    }

    fn finish(self, status: Status, reason: Option<RejectionReason>, detail: Option<String>) -> SynthesisOutcome {
        let mut executed = None;
        let mut source = None;
        let mut test_source = None;
        for a in &self.attempts {
            match a.phase {
                Phase::Test => test_source = Some(a.source.clone()),
                _ if a.result.is_ok() => executed = Some(a.source.clone()),
                _ => {}
            }
        }
        if status == Status::Accepted {
            source = executed.clone();
        }
        SynthesisOutcome {
            task: self.t.id.clone(),
            kind: self.cfg.kind,
            status,
            source,
            rejection_reason: reason,
            detail,
            attempts: self.attempts,
            test_source,
            executed_source: executed,
            validation: None,
        }
    }
}

/// The full loop against one worker. Errors are reserved for broken
/// configuration (prompt construction) and a dead sandbox; everything the LLM
/// can cause ends in an outcome.
pub fn synthesize(
    t: &TaskSpec,
    m: &SceneManifest,
    cfg: &SynthesisConfig,
    backend: &dyn LlmBackend,
    worker: &mut WorkerHandle,
    templates: &Templates,
) -> Result<SynthesisOutcome, SynthError> {
    let bundle = build_generation_prompt(m, t, &cfg.signature, &cfg.guidelines, &cfg.language, templates)?;
    let args = placeholder_inputs(cfg.kind, t, m, cfg.seed);
    let entry = cfg.signature.name.clone();
    let code_only = templates.render("code_only", &[]);
    let mut run = Run { t, cfg, attempts: Vec::new() };

    let mut prompt = bundle.render(templates);
    let mut phase = Phase::Generation;
    let mut previous: Option<String> = None;
    let mut accepted_source = None;
    let mut output = None;
    for slot in 0..=cfg.max_repairs {
        let last = slot == cfg.max_repairs;
        let completion = match run.ask(backend, &prompt) {
            Ok(c) => c,
            Err(e) => return Ok(run.finish(Status::Rejected, Some(RejectionReason::BackendError), Some(e.to_string()))),
        };
        let extracted = match extract_code(&completion) {
            Ok(x) if x.looks_like_code() => x,
            _ => {
                let d = Diagnostic::new("ExtractionError", "no code found in the completion", "");
                run.log(phase, &prompt, &completion, "", CallResult::Error { diagnostic: d });
                if last {
                    return Ok(run.finish(Status::Rejected, Some(RejectionReason::ExtractionFailed), None));
                }
                if !prompt.ends_with(&code_only) {
                    prompt = format!("{prompt}\n\n{code_only}");
                }
                continue;
            }
        };
        let source = extracted.code;
        if previous.as_deref() == Some(source.as_str()) {
            let d = Diagnostic::new("RepairError", "the repaired code is identical to the previous attempt", "");
            run.log(phase, &prompt, &completion, &source, CallResult::Error { diagnostic: d });
            return Ok(run.finish(
                Status::Rejected,
                Some(RejectionReason::RepairBudgetExhausted),
                Some("repair returned identical source".into()),
            ));
        }
        let res = match worker.load_source(&source, &entry)? {
            CallResult::Ok { .. } => worker.call_entry(&args, cfg.timeout, Some(cfg.seed))?,
            other => other,
        };
        let res = check_output(cfg.kind, t, res);
        let diag = res.diagnostic().cloned();
        if let CallResult::Ok { value } = &res {
            output = Some(value.clone());
        }
        run.log(phase, &prompt, &completion, &source, res);
        match diag {
            None => {
                accepted_source = Some(source);
                break;
            }
            Some(_) if last => {}
            Some(d) => {
                prompt = build_repair_prompt(&d, &source, &cfg.language, templates);
                phase = Phase::Repair;
                previous = Some(source);
            }
        }
    }
    let validation = match (cfg.kind, &output) {
        (SynthKind::Goal, Some(v)) => GoalSet::from_json(v, t.n_objects)
            .ok()
            .and_then(|g| validate(&g, t, m, &m.workspace).ok()),
        _ => None,
    };
    let Some(source) = accepted_source else {
        let mut o = run.finish(Status::Rejected, Some(RejectionReason::RepairBudgetExhausted), None);
        o.validation = validation;
        return Ok(o);
    };

    let test_prompt = build_test_prompt(&source, &test_guidelines(cfg, &args, templates), &cfg.language, templates);
    let completion = match run.ask(backend, &test_prompt) {
        Ok(c) => c,
        Err(e) => {
            let mut o = run.finish(Status::Rejected, Some(RejectionReason::BackendError), Some(e.to_string()));
            o.validation = validation;
            return Ok(o);
        }
    };
    let test_source = match extract_code(&completion) {
        Ok(x) if x.looks_like_code() => x.code,
        _ => {
            let d = Diagnostic::new("ExtractionError", "no code found in the completion", "");
            run.log(Phase::Test, &test_prompt, &completion, "", CallResult::Error { diagnostic: d });
            let mut o = run.finish(Status::Rejected, Some(RejectionReason::ExtractionFailed), Some("test completion had no code".into()));
            o.validation = validation;
            return Ok(o);
        }
    };
    let res = run_functional_test(worker, &test_source, &source, cfg.timeout, cfg.seed)?;
    let passed = res.is_ok();
    run.log(Phase::Test, &test_prompt, &completion, &test_source, res);
    let mut o = if passed {
        run.finish(Status::Accepted, None, None)
    } else {
        run.finish(Status::Rejected, Some(RejectionReason::FunctionalTestFailed), None)
    };
    o.validation = validation;
    Ok(o)
}

/// `<root>/<task>-<kind>` with `#` in variant ids replaced.
pub fn audit_dir(root: &Path, task: &str, kind: SynthKind) -> PathBuf {
    root.join(format!("{}-{}", task.replace('#', "-v"), kind.as_str()))
}

/// Writes prompts, completions, diagnostics, sources and `outcome.json`.
/// Any previous contents of the directory are replaced.
pub fn write_audit(dir: &Path, o: &SynthesisOutcome) -> std::io::Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    for (i, a) in o.attempts.iter().enumerate() {
        let stem = format!("{:02}-{}", i + 1, a.phase.as_str());
        std::fs::write(dir.join(format!("{stem}.prompt.txt")), &a.prompt)?;
        std::fs::write(dir.join(format!("{stem}.completion.txt")), &a.completion)?;
        if !a.source.is_empty() {
            std::fs::write(dir.join(format!("{stem}.py")), &a.source)?;
        }
        if let Some(d) = a.result.diagnostic() {
            std::fs::write(dir.join(format!("{stem}.diagnostic.txt")), format!("{d}\n"))?;
        }
    }
    if let Some(s) = &o.source {
        std::fs::write(dir.join("final.py"), s)?;
    }
    if let Some(s) = &o.test_source {
        std::fs::write(dir.join("test.py"), s)?;
    }
    std::fs::write(dir.join("outcome.json"), o.to_json())
}

pub fn read_outcome(dir: &Path) -> Result<SynthesisOutcome, String> {
    let p = dir.join("outcome.json");
    let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
}

/// Executable and validity rates over a set of synthesis runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditStats {
    pub runs: usize,
    pub accepted: usize,
    pub executable: usize,
    pub valid: usize,
    pub goal_runs: usize,
}

fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

impl AuditStats {
    pub fn from_outcomes<'a, I: IntoIterator<Item = &'a SynthesisOutcome>>(it: I) -> Self {
        let mut s = AuditStats { runs: 0, accepted: 0, executable: 0, valid: 0, goal_runs: 0 };
        for o in it {
            s.runs += 1;
            s.accepted += o.accepted() as usize;
            s.executable += o.executable() as usize;
            if o.kind == SynthKind::Goal {
                s.goal_runs += 1;
                s.valid += o.valid() as usize;
            }
        }
        s
    }

    /// Reads `outcome.json` from every immediate subdirectory of `root`.
    pub fn from_dir(root: &Path) -> Result<Self, String> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(|e| format!("{}: {e}", root.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("outcome.json").is_file())
            .collect();
        dirs.sort();
        let outcomes = dirs.iter().map(|d| read_outcome(d)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_outcomes(&outcomes))
    }

    /// Share of runs whose code executed after the repair loop, in percent.
    pub fn executable_rate(&self) -> f64 {
        percent(self.executable, self.runs)
    }

    /// Share of goal runs whose output passed validation, in percent.
    pub fn valid_rate(&self) -> f64 {
        percent(self.valid, self.goal_runs)
    }

    pub fn accepted_rate(&self) -> f64 {
        percent(self.accepted, self.runs)
    }
}
