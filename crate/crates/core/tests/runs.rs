use larg::runs::*;
use larg::scene::find_task;

#[test]
fn variants_are_parsed_from_completion_lines() {
    let c = "\n1. Put the cube on the left.\n2) \"Slide it left.\"\n- Move it leftwards.\n\nExtra line.\n";
    assert_eq!(
        parse_variants(c, 3).unwrap(),
        vec!["Put the cube on the left.", "Slide it left.", "Move it leftwards."]
    );
    assert!(parse_variants("only one\n", 2).is_err());
    // numbers inside a sentence are kept
    assert_eq!(parse_variants("20cm above the center\n", 1).unwrap(), vec!["20cm above the center"]);
}

#[test]
fn task_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let d01 = find_task("d01").unwrap();
    assert_eq!(resolve_task("d01", dir.path()).unwrap(), *d01);
    assert_eq!(resolve_task("d01#0", dir.path()).unwrap(), *d01);
    assert_eq!(resolve_task("d01#1", dir.path()).unwrap_err().code, EXIT_USAGE);
    assert_eq!(resolve_task("d01#x", dir.path()).unwrap_err().code, EXIT_USAGE);
    assert_eq!(resolve_task("q1", dir.path()).unwrap_err().code, EXIT_USAGE);

    write_paraphrases(dir.path(), "d01", &["A.".to_string(), "B.".to_string()]).unwrap();
    let t = resolve_task("d01#2", dir.path()).unwrap();
    assert_eq!(t.description, "B.");
    assert_eq!(t.id, "d01");
    assert_eq!(t.constraint, d01.constraint);

    write_paraphrases(dir.path(), "m04", &["Lift it.".to_string()]).unwrap();
    assert_eq!(resolve_task("m04#2", dir.path()).unwrap().description, "Lift it.");
}

#[test]
fn run_config_defaults() {
    let c = RunConfig::new("runs");
    assert_eq!(c.backend, BackendMode::Replay);
    assert_eq!(c.max_repairs, 3);
    assert_eq!(c.synth_dir(), std::path::Path::new("runs/synth"));
    assert!(c.backend().is_ok());
    let mut c = RunConfig::new("runs");
    c.fixture_dir = "/nonexistent/fixtures".into();
    assert_eq!(c.backend().err().unwrap().code, EXIT_USAGE);
    assert_eq!(BackendMode::parse("live"), Some(BackendMode::Live));
    assert_eq!(BackendMode::parse("mock"), None);
}
