//! Operator CLI: task listing, synthesis, paraphrasing, validation, evaluation.
//!
//! Exit codes: 0 ok, 1 internal failure, 2 synthesis rejected or goal invalid,
//! 3 backend error, 64 usage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use larg::codegen::{placeholder_inputs, AuditStats};
use larg::corpus::outcome_row;
use larg::encoder::encode;
use larg::llm::{ChatRequest, DEFAULT_MODEL};
use larg::prompt::{build_paraphrase_prompt, FunctionSignature, SynthKind, Templates};
use larg::runs::*;
use larg::sandbox::spawn_worker;
use larg::scene::{default_manifest, task_catalog, Family, GoalSet};
use larg::sim::{emit_report, evaluate_suite, suite_tasks, ReportFormat, SuiteOptions};
use larg::validator::validate;

#[derive(Parser)]
#[command(name = "larg", version, about = "Goal and reward function synthesis for tabletop manipulation tasks")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Run directory for audit trails, paraphrases and reports.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "replay", value_parser = ["live", "record", "replay"])]
    backend: String,
    /// Replay source or record target; defaults to $LARG_FIXTURE_DIR or the bundled default set.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = larg::codegen::DEFAULT_MAX_REPAIRS)]
    max_repairs: usize,
    /// Sandbox worker executable speaking the line protocol; in-process when omitted.
    #[arg(long, global = true)]
    worker: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the task catalog.
    Tasks {
        #[arg(long, value_parser = ["gcrl", "mtrl"])]
        family: Option<String>,
        /// Print only this task's description.
        #[arg(long)]
        id: Option<String>,
    },
    /// Generate, repair and test one function.
    Synth {
        #[arg(value_parser = ["goal", "reward"])]
        kind: String,
        /// Task id, or id#k for a variant.
        task: String,
    },
    /// Roll out a suite and write a report.
    Eval {
        #[arg(long, default_value = "all", value_parser = ["gcrl", "mtrl", "all"])]
        suite: String,
        /// Use oracle goals and native rewards instead of synthesized artifacts.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Ask the backend for rephrasings of a task and store them.
    Paraphrase {
        id: String,
        #[arg(short = 'n', default_value_t = 3)]
        n: usize,
    },
    /// Validate a goal set (JSON list of 7-vectors) or the output of a goal function.
    Validate {
        task: String,
        #[arg(long, conflicts_with = "source", required_unless_present = "source")]
        goal: Option<PathBuf>,
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Pass rates over the synthesis audit trails of a run directory.
    Audit {
        /// Directory of audit trails; <out>/synth by default.
        dir: Option<PathBuf>,
    },
    /// Print the 512-dim task embedding as JSON.
    Encode {
        #[arg(required_unless_present = "id", conflicts_with = "id")]
        text: Option<String>,
        #[arg(long)]
        id: Option<String>,
    },
}

fn config(a: &RunArgs) -> RunConfig {
    let mut c = RunConfig::new(&a.out);
    c.backend = BackendMode::parse(&a.backend).expect("restricted by clap");
    if let Some(f) = &a.fixtures {
        c.fixture_dir = f.clone();
    }
    c.seed = a.seed;
    c.max_repairs = a.max_repairs;
    c.worker = a.worker.clone();
    c
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::GoalGcrl => "gcrl",
        Family::RewardMtrl => "mtrl",
    }
}

fn io(e: std::io::Error, p: &std::path::Path) -> RunError {
    RunError::failure(format!("{}: {e}", p.display()))
}

fn run(cli: Cli) -> Result<i32, RunError> {
    let cfg = config(&cli.run);
    match cli.cmd {
        Cmd::Tasks { family, id } => {
            if let Some(id) = id {
                let t = resolve_task(&id, &cfg.paraphrase_dir())?;
                println!("{}", t.description);
                return Ok(EXIT_OK);
            }
            for t in task_catalog() {
                if family.as_deref().is_none_or(|f| f == family_name(t.family)) {
                    println!("{}\t{}\t{}", t.id, family_name(t.family), t.description);
                }
            }
            Ok(EXIT_OK)
        }
        Cmd::Synth { kind, task } => {
            let kind = SynthKind::parse(&kind).expect("restricted by clap");
            // resolve first so an unknown id is a usage error even without fixtures
            resolve_task(&task, &cfg.paraphrase_dir())?;
            let backend = cfg.backend()?;
            let (o, dir) = synth_task(&task, kind, &default_manifest(), &cfg, backend.as_ref())?;
            println!("{}", outcome_row(&task, &o));
            if let Some(d) = &o.detail {
                eprintln!("{d}");
            }
            eprintln!("audit trail: {}", dir.display());
            Ok(exit_code(&o))
        }
        Cmd::Eval { suite, oracle, episodes, format } => {
            let format = ReportFormat::parse(&format).map_err(RunError::usage)?;
            if episodes == 0 {
                return Err(RunError::usage("--episodes must be at least 1"));
            }
            let tasks = suite_tasks(&suite).expect("restricted by clap");
            let arts = if oracle { Default::default() } else { load_artifacts(&cfg.synth_dir(), &tasks) };
            let opts = SuiteOptions { episodes, seed: cfg.seed, worker: cfg.worker_config(), ..SuiteOptions::default() };
            let report = evaluate_suite(&tasks, &arts, &default_manifest(), &opts)
                .map_err(|e| RunError::failure(e.to_string()))?;
            let text = emit_report(&report, format);
            let dir = cfg.report_dir();
            std::fs::create_dir_all(&dir).map_err(|e| io(e, &dir))?;
            let path = dir.join(format!("{suite}-seed{}.{}", cfg.seed, format.extension()));
            std::fs::write(&path, &text).map_err(|e| io(e, &path))?;
            print!("{text}");
            eprintln!("report: {}", path.display());
            Ok(EXIT_OK)
        }
        Cmd::Paraphrase { id, n } => {
            if id.contains('#') {
                return Err(RunError::usage("paraphrase takes a plain task id"));
            }
            let t = resolve_task(&id, &cfg.paraphrase_dir())?;
            let prompt = build_paraphrase_prompt(&t, n, &Templates::default()).map_err(|e| RunError::usage(e.to_string()))?;
            let completion = cfg.backend()?.complete(&ChatRequest::user(DEFAULT_MODEL, &prompt))?;
            let variants = parse_variants(&completion, n).map_err(|m| RunError { code: EXIT_BACKEND, message: m })?;
            let path = write_paraphrases(&cfg.paraphrase_dir(), &id, &variants)?;
            for v in &variants {
                println!("{v}");
            }
            eprintln!("stored: {}", path.display());
            Ok(EXIT_OK)
        }
        Cmd::Validate { task, goal, source } => {
            let t = resolve_task(&task, &cfg.paraphrase_dir())?;
            if SynthKind::for_family(t.family) != SynthKind::Goal {
                return Err(RunError::usage(format!("task {} has no goal set to validate", t.id)));
            }
            let m = default_manifest().for_task(&t);
            let value: serde_json::Value = if let Some(p) = goal {
                let text = std::fs::read_to_string(&p).map_err(|e| io(e, &p))?;
                serde_json::from_str(&text).map_err(|e| RunError::usage(format!("{}: {e}", p.display())))?
            } else {
                let p = source.expect("clap requires one of --goal and --source");
                let src = std::fs::read_to_string(&p).map_err(|e| io(e, &p))?;
                let sig = FunctionSignature::for_task(SynthKind::Goal, &t);
                let args = placeholder_inputs(SynthKind::Goal, &t, &m, cfg.seed);
                let mut w = spawn_worker(&cfg.worker_config()).map_err(|e| RunError::failure(e.to_string()))?;
                let r = w.run(&src, &sig.name, &args, Some(cfg.seed)).map_err(|e| RunError::failure(e.to_string()))?;
                match r.value() {
                    Some(v) => v.clone(),
                    None => {
                        let d = r.diagnostic().map(|d| d.to_string()).unwrap_or_default();
                        println!("{}", serde_json::json!({ "valid": false, "error": d }));
                        return Ok(EXIT_REJECTED);
                    }
                }
            };
            let g = GoalSet::from_json(&value, t.n_objects).map_err(RunError::usage)?;
            let report = validate(&g, &t, &m, &m.workspace).map_err(|e| RunError::usage(e.to_string()))?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            Ok(if report.valid { EXIT_OK } else { EXIT_REJECTED })
        }
        Cmd::Audit { dir } => {
            let dir = dir.unwrap_or_else(|| cfg.synth_dir());
            let s = AuditStats::from_dir(&dir).map_err(RunError::usage)?;
            println!("runs\t{}", s.runs);
            println!("accepted\t{}\t{:.1}%", s.accepted, s.accepted_rate());
            println!("executable\t{}\t{:.1}%", s.executable, s.executable_rate());
            println!("valid_goals\t{}/{}\t{:.1}%", s.valid, s.goal_runs, s.valid_rate());
            Ok(EXIT_OK)
        }
        Cmd::Encode { text, id } => {
            let text = match id {
                Some(id) => resolve_task(&id, &cfg.paraphrase_dir())?.description,
                None => text.expect("clap requires text or --id"),
            };
            let e = encode(&text).map_err(|e| RunError::usage(e.to_string()))?;
            println!("{}", serde_json::to_string(e.as_slice()).expect("finite floats serialize"));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("larg: {e}");
            e.code
        }
    };
    ExitCode::from(code as u8)
}
