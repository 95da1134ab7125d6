use otlab::lab::{self, RunOptions, Status};

fn run_builtin(name: &str) -> lab::Run {
    let s = lab::builtin_named(name).unwrap().unwrap();
    lab::run(&s, &RunOptions::default()).unwrap()
}

#[test]
fn identity_square_passes() {
    let run = run_builtin("identity-square");
    let failed: Vec<_> = run.report.failed_checks().collect();
    assert_eq!(run.report.status, Status::Pass, "{failed:?}");
    assert!(run.report.checks.iter().any(|c| c.name == "chi monotonicity"));
    assert!(run.report.checks.iter().any(|c| c.name == "section slopes"));
}

#[test]
fn no_homogeneous_corner_is_non_round() {
    let run = run_builtin("no-homog-corner");
    let failed: Vec<_> = run.report.failed_checks().collect();
    assert_eq!(run.report.status, Status::Pass, "{failed:?}");
    let round = run.report.outputs.iter().find(|o| o.diagnostic == "roundness").unwrap();
    assert_eq!(round.summary["verdict"], "NON_ROUND");
    let class = run.report.outputs.iter().find(|o| o.diagnostic == "classify").unwrap();
    assert_eq!(class.summary["verdict"], "NoHomogeneousMap");
}

#[test]
fn seed_override_changes_the_sample_but_not_the_verdict() {
    let s = lab::builtin_named("identity-square").unwrap().unwrap();
    let a = lab::run(&s, &RunOptions { seed: Some(21), slack: None }).unwrap();
    assert_eq!(a.report.seed, 21);
    assert_eq!(a.report.status, Status::Pass);
    let b = run_builtin("identity-square");
    assert_ne!(a.report.scenario_hash, b.report.scenario_hash);
    assert_ne!(a.report.outputs[0].csv, b.report.outputs[0].csv);
}
