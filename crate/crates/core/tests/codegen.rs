use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use larg::codegen::*;
use larg::corpus::{corpus, outcome_table, record_corpus, replay_root};
use larg::llm::{LlmError, ScriptedBackend};
use larg::prompt::{build_repair_prompt, SynthKind, Templates};
use larg::sandbox::{spawn_worker, CallResult, WorkerConfig, WorkerHandle};
use larg::scene::{default_manifest, find_task};
use proptest::prelude::*;
use serde_json::json;

fn worker() -> WorkerHandle {
    spawn_worker(&WorkerConfig::default()).unwrap()
}

fn fenced(code: &str) -> String {
    format!("```python\n{code}\n```\n")
}

const GOOD_D01: &str = "def generate_goal(cube_pose):\n    return [[0.9, 0.88, cube_pose[2]]]";
const BAD_D01: &str = "def generate_goal(cube_pose):\n    return [[0.9, 0.88, cube_pose[9]]]";
const PASSING_TEST: &str = "def test_goal():\n    assert len(generate_goal([0.5, 0.5, 0.805, 1, 0, 0, 0])) == 1";

fn synth_scripted(task: &str, kind: SynthKind, max_repairs: usize, replies: Vec<String>) -> (SynthesisOutcome, usize) {
    let t = find_task(task).unwrap();
    let mut cfg = SynthesisConfig::new(kind, t);
    cfg.max_repairs = max_repairs;
    let b = ScriptedBackend::new(replies);
    let o = synthesize(t, &default_manifest(), &cfg, &b, &mut worker(), &Templates::default()).unwrap();
    (o, b.remaining())
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn corpus_fixtures_are_current() {
    let c = corpus();
    if std::env::var("LARG_REGEN_FIXTURES").is_ok_and(|v| v == "1") {
        record_corpus(&c, &replay_root()).unwrap();
        let (table, _) = outcome_table(&c, &replay_root()).unwrap();
        std::fs::write(replay_root().parent().unwrap().join("expected_outcomes.tsv"), table).unwrap();
    }
    let tmp = tempfile::tempdir().unwrap();
    record_corpus(&c, tmp.path()).unwrap();
    let fresh = files(tmp.path());
    let committed = files(&replay_root());
    assert_eq!(fresh.keys().collect::<Vec<_>>(), committed.keys().collect::<Vec<_>>(), "fixture file sets differ; regenerate");
    for (k, v) in &fresh {
        assert!(committed[k] == *v, "fixture {k} is stale; regenerate with LARG_REGEN_FIXTURES=1");
    }
}

#[test]
fn scenario_outcomes() {
    // (status, reason, attempts) decided when the scenarios were written
    let expected: BTreeMap<&str, (&str, &str, usize)> = [
        ("d01-clean", ("accepted", "-", 2)),
        ("d05-clean", ("accepted", "-", 2)),
        ("d29-clean", ("accepted", "-", 2)),
        ("m01-clean", ("accepted", "-", 2)),
        ("m05-clean", ("accepted", "-", 2)),
        ("d01-one-bug", ("accepted", "-", 3)),
        ("d26-one-bug", ("accepted", "-", 3)),
        ("d30-one-bug", ("accepted", "-", 3)),
        ("m02-one-bug", ("accepted", "-", 3)),
        ("d06-syntax", ("accepted", "-", 3)),
        ("d13-prose", ("accepted", "-", 3)),
        ("m03-exhausted", ("rejected", "repair_budget_exhausted", 4)),
        ("d12-test-fails", ("rejected", "functional_test_failed", 2)),
        ("d07-identical", ("rejected", "repair_budget_exhausted", 2)),
        ("d20-prose", ("rejected", "extraction_failed", 2)),
        ("m04-timeout", ("rejected", "repair_budget_exhausted", 2)),
    ]
    .into_iter()
    .collect();
    let c = corpus();
    assert_eq!(c.scenarios.len(), expected.len());
    for s in &c.scenarios {
        let o = s.replay(&replay_root()).unwrap();
        let (status, reason, n) = expected[s.name.as_str()];
        assert_eq!(o.accepted(), status == "accepted", "{}", s.name);
        assert_eq!(o.rejection_reason.map(|r| r.as_str()).unwrap_or("-"), reason, "{}", s.name);
        assert_eq!(o.attempts.len(), n, "{}", s.name);
        assert!(o.attempts.len() <= 2 + s.max_repairs, "{}", s.name);
        if o.accepted() {
            assert!(o.attempts.last().unwrap().result.is_ok());
            assert!(o.source.is_some() && o.test_source.is_some());
        }
    }
}

#[test]
fn expected_table_matches_replay() {
    let frozen = std::fs::read_to_string(replay_root().parent().unwrap().join("expected_outcomes.tsv")).unwrap();
    let (table, _) = outcome_table(&corpus(), &replay_root()).unwrap();
    assert_eq!(table, frozen);
}

#[test]
fn d01_one_bug_repair_prompt_quotes_the_diagnostic() {
    let c = corpus();
    let s = c.scenarios.iter().find(|s| s.name == "d01-one-bug").unwrap();
    let o = s.replay(&replay_root()).unwrap();
    let d = o.attempts[0].result.diagnostic().unwrap();
    assert_eq!(d.etype, "NameError");
    assert_eq!(d.message, "name 'np' is not defined");
    assert_eq!(o.attempts[1].phase, Phase::Repair);
    assert!(o.attempts[1].prompt.contains(&d.to_string()));
    assert!(o.attempts[1].prompt.contains("np.array"));
}

#[test]
fn replay_is_byte_identical_across_runs() {
    let c = corpus();
    let (t1, o1) = outcome_table(&c, &replay_root()).unwrap();
    let (t2, o2) = outcome_table(&c, &replay_root()).unwrap();
    assert_eq!(t1, t2);
    for (a, b) in o1.iter().zip(&o2) {
        assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn corpus_composition() {
    let c = corpus();
    let count = |class: &str| c.scenarios.iter().filter(|s| s.class == class).count();
    assert!(c.scenarios.len() >= 12);
    assert!(count("clean") >= 4);
    assert!(count("one_bug") >= 5);
    assert!(count("unrecoverable") >= 3);
}

#[test]
fn zero_repairs_with_buggy_first_completion() {
    let (o, left) = synth_scripted("d01", SynthKind::Goal, 0, vec![fenced(BAD_D01)]);
    assert_eq!(o.rejection_reason, Some(RejectionReason::RepairBudgetExhausted));
    assert_eq!(o.attempts.len(), 1);
    assert_eq!(left, 0);
    assert!(!o.executable());
}

#[test]
fn test_with_syntax_error_is_a_functional_failure() {
    let (o, _) = synth_scripted("d01", SynthKind::Goal, 3, vec![fenced(GOOD_D01), fenced("def test_x(:\n    pass")]);
    assert_eq!(o.rejection_reason, Some(RejectionReason::FunctionalTestFailed));
    assert_eq!(o.attempts[1].result.diagnostic().unwrap().etype, "SyntaxError");
    assert!(o.executable());
    assert!(o.source.is_none());
}

#[test]
fn repair_prompt_uses_only_the_previous_attempt() {
    let bad2 = "def generate_goal(cube_pose):\n    return [[0.9, 0.88, undefined_z]]";
    let (o, _) = synth_scripted(
        "d01",
        SynthKind::Goal,
        3,
        vec![fenced(BAD_D01), fenced(bad2), fenced(GOOD_D01), fenced(PASSING_TEST)],
    );
    assert!(o.accepted(), "{o:?}");
    let p = &o.attempts[2].prompt;
    let d2 = o.attempts[1].result.diagnostic().unwrap();
    assert_eq!(*p, build_repair_prompt(d2, bad2, "python", &Templates::default()));
    assert!(!p.contains("cube_pose[9]"));
    assert!(!p.contains("IndexError"));
}

#[test]
fn extraction_failure_consumes_a_slot_and_appends_guideline() {
    let code_only = Templates::default().render("code_only", &[]);
    let (o, _) = synth_scripted(
        "d01",
        SynthKind::Goal,
        1,
        vec!["I would put it near the corner.".into(), fenced(GOOD_D01), fenced(PASSING_TEST)],
    );
    assert!(o.accepted());
    assert_eq!(o.attempts[0].result.diagnostic().unwrap().etype, "ExtractionError");
    assert!(o.attempts[1].prompt.ends_with(&code_only));
    assert!(o.attempts[1].prompt.starts_with(&o.attempts[0].prompt));
    assert_eq!(o.attempts[1].phase, Phase::Generation);

    let (o, _) = synth_scripted("d01", SynthKind::Goal, 0, vec!["no idea".into()]);
    assert_eq!(o.rejection_reason, Some(RejectionReason::ExtractionFailed));
}

#[test]
fn identical_repair_is_rejected_immediately() {
    let (o, left) = synth_scripted("d01", SynthKind::Goal, 3, vec![fenced(BAD_D01), fenced(BAD_D01), fenced(GOOD_D01)]);
    assert_eq!(o.rejection_reason, Some(RejectionReason::RepairBudgetExhausted));
    assert_eq!(o.attempts.len(), 2);
    assert_eq!(left, 1);
}

#[test]
fn backend_errors_become_rejections() {
    let t = find_task("d01").unwrap();
    let cfg = SynthesisConfig::new(SynthKind::Goal, t);
    let b = ScriptedBackend::with_results(vec![Err(LlmError::Network("connection refused".into()))]);
    let o = synthesize(t, &default_manifest(), &cfg, &b, &mut worker(), &Templates::default()).unwrap();
    assert_eq!(o.rejection_reason, Some(RejectionReason::BackendError));
    assert!(o.detail.unwrap().contains("connection refused"));

    let b = ScriptedBackend::new(vec!["   \n".to_string()]);
    let o = synthesize(t, &default_manifest(), &cfg, &b, &mut worker(), &Templates::default()).unwrap();
    assert_eq!(o.rejection_reason, Some(RejectionReason::BackendError));
}

#[test]
fn wrong_output_shape_is_repaired() {
    let shape = "def generate_goal(cube_pose):\n    return 'corner'";
    let (o, _) = synth_scripted("d01", SynthKind::Goal, 2, vec![fenced(shape), fenced(GOOD_D01), fenced(PASSING_TEST)]);
    assert!(o.accepted());
    assert_eq!(o.attempts[0].result.diagnostic().unwrap().etype, "TypeError");
}

#[test]
fn goal_outcomes_carry_validation() {
    let outside = "def generate_goal(cube_pose):\n    return [[1.5, 0.9, 0.805]]";
    let (o, _) = synth_scripted("d01", SynthKind::Goal, 0, vec![fenced(outside), fenced(PASSING_TEST)]);
    assert!(o.accepted());
    assert!(!o.valid());
    let (o, _) = synth_scripted("d01", SynthKind::Goal, 0, vec![fenced(GOOD_D01), fenced(PASSING_TEST)]);
    assert!(o.valid());
}

#[test]
fn placeholder_inputs_examples() {
    let m = default_manifest();
    let d01 = find_task("d01").unwrap();
    let args = placeholder_inputs(SynthKind::Goal, d01, &m, 0);
    assert_eq!(args, vec![json!([0.5, 0.5, 0.805, 1.0, 0.0, 0.0, 0.0])]);
    let d29 = find_task("d29").unwrap();
    assert_eq!(placeholder_inputs(SynthKind::Goal, d29, &m, 0).len(), 3);

    let m01 = find_task("m01").unwrap();
    let args = placeholder_inputs(SynthKind::Reward, m01, &m, 0);
    let object: Vec<f64> = serde_json::from_value(args[0].clone()).unwrap();
    assert_eq!(&object[..3], &[0.5, 0.5, 0.805]);
    let gripper: Vec<f64> = serde_json::from_value(args[2].clone()).unwrap();
    assert!((gripper[2] - 0.905).abs() < 1e-12);
    assert_eq!(args[3], json!(vec![0.0f64; 7]));
    assert_eq!(SynthKind::parse("policy"), None);
}

#[test]
fn functional_test_examples() {
    let mut w = worker();
    let t = Duration::from_secs(5);
    let ok = run_functional_test(&mut w, PASSING_TEST, GOOD_D01, t, 0).unwrap();
    assert!(ok.is_ok());
    let r = run_functional_test(&mut w, "def test_no():\n    assert False", GOOD_D01, t, 0).unwrap();
    assert_eq!(r.diagnostic().unwrap().etype, "AssertionError");
    let r = run_functional_test(&mut w, "def test_f():\n    return False", GOOD_D01, t, 0).unwrap();
    assert_eq!(r.diagnostic().unwrap().etype, "AssertionError");
    let r = run_functional_test(&mut w, "def test_t():\n    return 1", GOOD_D01, t, 0).unwrap();
    assert!(r.is_ok());
    let r = run_functional_test(&mut w, "def check():\n    pass", GOOD_D01, t, 0).unwrap();
    assert_eq!(r.diagnostic().unwrap().etype, "NameError");
    assert!(matches!(run_functional_test(&mut w, "def test_s(:", GOOD_D01, t, 0).unwrap(), CallResult::Error { .. }));
}

#[test]
fn truthiness() {
    for v in [json!(null), json!(false), json!(0), json!(0.0), json!(""), json!([]), json!({})] {
        assert!(!truthy(&v), "{v}");
    }
    for v in [json!(true), json!(2), json!("x"), json!([0]), json!({"a": 1})] {
        assert!(truthy(&v), "{v}");
    }
    assert_eq!(test_entry("import math\ndef helper():\n    pass\ndef test_a():\n    pass"), Some("test_a".into()));
}

fn outcome(kind: SynthKind, executable: bool, valid: bool) -> SynthesisOutcome {
    let src = "def f():\n    pass\n".to_string();
    SynthesisOutcome {
        task: "d01".into(),
        kind,
        status: Status::Rejected,
        source: None,
        rejection_reason: Some(RejectionReason::RepairBudgetExhausted),
        detail: None,
        attempts: vec![],
        test_source: None,
        executed_source: executable.then_some(src),
        validation: (kind == SynthKind::Goal && executable)
            .then(|| larg::validator::ValidationReport { valid, violations: vec![] }),
    }
}

#[test]
fn audit_stats_reproduce_reported_percentages() {
    // 28 of 32 goal runs valid
    let mut runs: Vec<SynthesisOutcome> = (0..32).map(|i| outcome(SynthKind::Goal, true, i < 28)).collect();
    let s = AuditStats::from_outcomes(&runs);
    assert_eq!(s.valid_rate(), 87.5);
    // 4 of 32 executable, 1 of 32 valid
    runs = (0..32).map(|i| outcome(SynthKind::Goal, i < 4, i < 1)).collect();
    let s = AuditStats::from_outcomes(&runs);
    assert_eq!(s.executable_rate(), 12.5);
    assert_eq!(format!("{:.1}", s.valid_rate()), "3.1");

    let tmp = tempfile::tempdir().unwrap();
    for (i, o) in runs.iter().enumerate() {
        write_audit(&audit_dir(tmp.path(), &format!("d{:02}", i + 1), SynthKind::Goal), o).unwrap();
    }
    assert_eq!(AuditStats::from_dir(tmp.path()).unwrap(), s);
}

#[test]
fn audit_dir_layout() {
    let c = corpus();
    let s = c.scenarios.iter().find(|s| s.name == "d01-one-bug").unwrap();
    let o = s.replay(&replay_root()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = audit_dir(tmp.path(), "d01", SynthKind::Goal);
    assert!(dir.ends_with("d01-goal"));
    write_audit(&dir, &o).unwrap();
    for f in [
        "01-generation.prompt.txt",
        "01-generation.completion.txt",
        "01-generation.py",
        "01-generation.diagnostic.txt",
        "02-repair.prompt.txt",
        "03-test.py",
        "final.py",
        "test.py",
        "outcome.json",
    ] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(!dir.join("02-repair.diagnostic.txt").exists());
    let back = read_outcome(&dir).unwrap();
    assert_eq!(back.to_json(), o.to_json());
    assert!(audit_dir(tmp.path(), "m04#1", SynthKind::Reward).ends_with("m04-v1-reward"));
}

#[derive(Debug, Clone)]
enum Reply {
    Good,
    Bad(u8),
    Prose,
    Same,
}

fn reply_text(r: &Reply, prev: &str) -> String {
    match r {
        Reply::Good => fenced(GOOD_D01),
        Reply::Bad(k) => fenced(&format!("def generate_goal(cube_pose):\n    return [[0.9, 0.88, cube_pose[{}]]]", 10 + k)),
        Reply::Prose => "I am not sure how to do that.".into(),
        Reply::Same => prev.to_string(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loop_invariants(max_repairs in 0usize..4, script in proptest::collection::vec(
        prop_oneof![Just(Reply::Good), (0u8..200).prop_map(Reply::Bad), Just(Reply::Prose), Just(Reply::Same)], 1..7)
    ) {
        let mut replies = Vec::new();
        let mut prev = fenced(BAD_D01);
        for r in &script {
            let text = reply_text(r, &prev);
            prev = text.clone();
            replies.push(text);
        }
        replies.push(fenced(PASSING_TEST));
        let (o, _) = synth_scripted("d01", SynthKind::Goal, max_repairs, replies);
        prop_assert!(o.attempts.len() <= 2 + max_repairs);
        if o.accepted() {
            prop_assert!(o.attempts.last().unwrap().result.is_ok());
            prop_assert_eq!(o.attempts.last().unwrap().phase, Phase::Test);
            let code_attempts: Vec<_> = o.attempts.iter().filter(|a| a.phase != Phase::Test).collect();
            prop_assert!(code_attempts.last().unwrap().result.is_ok());
        } else {
            prop_assert!(o.rejection_reason.is_some());
        }
        // consecutive code attempts never repeat a source
        let sources: Vec<&str> = o.attempts.iter().filter(|a| {
                a.phase != Phase::Test
                    && a.result.diagnostic().is_none_or(|d| d.etype != "ExtractionError" && d.etype != "RepairError")
            }).map(|a| a.source.as_str()).collect();
        for w in sources.windows(2) {
            prop_assert_ne!(w[0], w[1]);
        }
    }
}
