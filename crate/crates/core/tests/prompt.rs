use larg::prompt::*;
use larg::sandbox::Diagnostic;
use larg::scene::{default_manifest, find_task, task_catalog, Family};

fn t() -> Templates {
    Templates::default()
}

fn bundle(id: &str, guidelines: &[String]) -> PromptBundle {
    let task = find_task(id).unwrap();
    let sig = FunctionSignature::for_task(SynthKind::for_family(task.family), task);
    build_generation_prompt(&default_manifest(), task, &sig, guidelines, DEFAULT_LANGUAGE, &t()).unwrap()
}

#[test]
fn generation_prompt_has_the_four_parts_in_order() {
    let b = bundle("d01", &[]);
    let text = b.render(&t());
    assert!(text.contains("1m x 1m x 0.78m"));
    let d01 = &find_task("d01").unwrap().description;
    assert_eq!(&b.task_section, d01);
    let env = text.find("Environment:").unwrap();
    let task = text.find(d01.as_str()).unwrap();
    let sig = text.find("def generate_goal(cube_pose):").unwrap();
    assert!(env < task && task < sig);
    assert!(!text.contains("Additional guidelines"));
    assert_eq!(b.generation_language, "python");
    assert_eq!(text.matches("python").count(), 1, "language named once");
}

#[test]
fn guidelines_close_the_prompt() {
    let text = bundle("d01", &["return positions as plain lists".into()]).render(&t());
    assert!(text.ends_with("\nreturn positions as plain lists"));
    let g = text.find("Additional guidelines:").unwrap();
    assert!(g > text.find("def generate_goal").unwrap());
}

#[test]
fn signature_must_match_the_family() {
    let err = build_generation_prompt(&default_manifest(), find_task("d01").unwrap(), &FunctionSignature::reward(), &[], "python", &t());
    assert!(matches!(err, Err(PromptError::SignatureMismatch { .. })));
    let err = build_generation_prompt(&default_manifest(), find_task("m03").unwrap(), &FunctionSignature::goal(1), &[], "python", &t());
    assert!(matches!(err, Err(PromptError::SignatureMismatch { .. })));
}

#[test]
fn signatures_document_every_parameter() {
    let mut sig = FunctionSignature::goal(3);
    assert_eq!(sig.params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["cube1", "cube2", "cube3"]);
    sig.check().unwrap();
    sig.params[1].doc.clear();
    assert!(matches!(sig.check(), Err(PromptError::Signature(_))));
    let r = FunctionSignature::reward().render();
    assert!(r.starts_with("def compute_reward(object_pose, goal_pose, gripper_position, action):"));
}

#[test]
fn multi_object_prompt_lists_three_cubes() {
    let text = bundle("d29", &[]).render(&t());
    for id in ["cube1:", "cube2:", "cube3:"] {
        assert!(text.contains(id), "{id}");
    }
    assert!(!bundle("d01", &[]).render(&t()).contains("cube2:"));
}

#[test]
fn only_the_task_part_changes_between_tasks() {
    let g = vec!["keep z above the table".to_string()];
    let a = bundle("d01", &g);
    for task in task_catalog().iter().filter(|x| x.family == Family::GoalGcrl && x.n_objects == 1) {
        let b = bundle(&task.id, &g);
        assert_eq!(a.env_section, b.env_section);
        assert_eq!(a.signature_section, b.signature_section);
        assert_eq!(a.guidelines_section, b.guidelines_section);
        assert_eq!(b.task_section, task.description);
    }
}

#[test]
fn repair_prompt_carries_the_diagnostic_and_source() {
    let d = Diagnostic::new("ZeroDivisionError", "division by zero", "File \"<generated>\", line 3, in ratio\n    return n / total");
    let src = "def ratio(n):\n    total = 0\n    return n / total\n";
    let p = build_repair_prompt(&d, src, "python", &t());
    assert!(p.contains("ZeroDivisionError: division by zero"));
    assert!(p.contains(&d.frame));
    assert!(p.contains(src.trim_end()));
    assert_eq!(p, build_repair_prompt(&d, src, "python", &t()));
    let empty = build_repair_prompt(&d, "", "python", &t());
    assert!(empty.ends_with("```python\n\n```"));
    let header = p.find("raised an exception").unwrap();
    assert!(header < p.find("ZeroDivisionError").unwrap() && p.find("ZeroDivisionError").unwrap() < p.find("def ratio").unwrap());
}

#[test]
fn test_prompt_sections() {
    let src = "def generate_goal(cube_pose):\n    return [[0.5, 0.5, 0.93]]\n";
    let g = vec!["Check that one target is returned.".to_string()];
    let p = build_test_prompt(src, &g, "python", &t());
    assert!(p.contains(src.trim_end()));
    assert!(p.contains("Guidelines for the test:\nCheck that one target is returned."));
    assert_eq!(p.split("\n\n").count(), 3);
    let bare = build_test_prompt(src, &[], "python", &t());
    assert_eq!(bare.split("\n\n").count(), 2);
    assert!(!bare.contains("Guidelines"));
    assert_eq!(p, build_test_prompt(src, &g, "python", &t()));
}

#[test]
fn paraphrase_prompt() {
    let d01 = find_task("d01").unwrap();
    let p = build_paraphrase_prompt(d01, 3, &t()).unwrap();
    assert!(p.contains("3 semantically similar variants"));
    assert!(p.contains(&d01.description));
    let one = build_paraphrase_prompt(find_task("m09").unwrap(), 1, &t()).unwrap();
    assert!(one.contains("exactly 1 line,"));
    assert_eq!(build_paraphrase_prompt(d01, 0, &t()), Err(PromptError::ParaphraseCount));
}

#[test]
fn templates_can_be_replaced_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("repair.txt"), "FIX {{diagnostic}}\n---\n{{source}}\n").unwrap();
    let tpl = Templates::from_dir(dir.path()).unwrap();
    let d = Diagnostic::new("NameError", "name 'x' is not defined", "");
    assert_eq!(build_repair_prompt(&d, "x", "python", &tpl), "FIX NameError: name 'x' is not defined\n---\nx");
    // untouched templates keep the built-in text
    assert_eq!(build_test_prompt("s", &[], "python", &tpl), build_test_prompt("s", &[], "python", &t()));
}

#[test]
fn placeholders_in_values_are_not_expanded() {
    let tpl = t();
    let d = Diagnostic::new("KeyError", "'{{source}}'", "");
    let p = build_repair_prompt(&d, "d = {'a': 1}", "python", &tpl);
    assert!(p.contains("KeyError: '{{source}}'"));
    assert!(p.contains("d = {'a': 1}"));
}

#[test]
fn meters_formatting() {
    assert_eq!(meters(1.0), "1m");
    assert_eq!(meters(0.78), "0.78m");
    assert_eq!(meters(0.165), "0.165m");
}
