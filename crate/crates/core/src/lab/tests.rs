use super::*;
use crate::convex2d::Vec2;

const MINIMAL: &str = r#"
name = "tiny"
seed = 3
sites = 60

[source]
shape = "square"
half_width = 1.0

[target]
shape = "square"
half_width = 1.0

[source_density]
kind = "uniform"
c = 1.0

[target_density]
kind = "uniform"
c = 2.0

[[base_points]]
point = [0.0, 0.0]

[[diagnostics]]
kind = "sections"
radii = 4
params = { min_cells = 5 }

[[diagnostics]]
kind = "chi"
radii = 6
params = { min_cells = 5 }
"#;

fn minimal() -> Scenario {
    Scenario::from_toml(MINIMAL).unwrap()
}

fn config_error(text: &str) -> String {
    match Scenario::from_toml(text) {
        Err(LabError::Config(m)) => m,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn builtin_library_parses_and_round_trips() {
    let all = builtin().unwrap();
    assert_eq!(all.len(), BUILTIN_NAMES.len());
    for (s, name) in all.iter().zip(BUILTIN_NAMES) {
        assert_eq!(&s.name, name);
        let again = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(&again, s);
    }
    assert!(builtin_named("no-such-scenario").unwrap().is_none());
    assert_eq!(builtin_named("linear-map").unwrap().unwrap().name, "linear-map");
}

#[test]
fn unknown_key_is_reported_with_its_location() {
    let text = MINIMAL.replace("seed = 3", "seed = 3\nsead = 4");
    let m = config_error(&text);
    assert!(m.contains("sead"), "{m}");
    assert!(m.contains("line 4"), "{m}");
}

#[test]
fn wrong_type_and_missing_field_are_errors() {
    let m = config_error(&MINIMAL.replace("sites = 60", "sites = \"many\""));
    assert!(m.contains("sites") || m.contains("line 4"), "{m}");
    let m = config_error(&MINIMAL.replace("half_width = 1.0\n\n[target]", "\n[target]"));
    assert!(m.contains("half_width"), "{m}");
}

#[test]
fn semantic_validation() {
    let cases = [
        (MINIMAL.replace("name = \"tiny\"", "name = \"\""), "name"),
        (MINIMAL.replace("sites = 60", "sites = 0"), "sites"),
        (MINIMAL.replace("point = [0.0, 0.0]", "vertex = 9"), "vertex 9"),
        (MINIMAL.replace("point = [0.0, 0.0]", "point = [3.0, 0.0]"), "not in the source"),
        (MINIMAL.replace("point = [0.0, 0.0]", "point = [0.0, 0.0]\nvertex = 1"), "exactly one"),
        (MINIMAL.replace("kind = \"chi\"", "kind = \"sections\""), "twice"),
        (MINIMAL.replace("radii = 4", "radii = 1"), "at least 2"),
        (MINIMAL.replace("point = [0.0, 0.0]", "point = [0.0, 0.0]\npin_origin = true"), "pin_origin"),
        (MINIMAL.replace("c = 2.0", "c = -2.0"), "target_density"),
    ];
    for (text, needle) in cases {
        let m = config_error(&text);
        assert!(m.contains(needle), "expected '{needle}' in: {m}");
    }
}

#[test]
fn parametric_shapes_put_the_documented_vertex_first() {
    let sector = PolygonSpec::Sector {
        lo_deg: 20.0,
        hi_deg: 70.0,
        radius: 1.0,
        segments: 8,
    };
    let p = sector.build().unwrap();
    assert_eq!(sector.vertex_list().unwrap()[0], Vec2::ZERO);
    assert_eq!(p.len(), 10);
    let cap = PolygonSpec::HalfPlaneCap {
        normal_deg: 90.0,
        radius: 2.0,
        segments: 16,
    };
    let q = cap.build().unwrap();
    assert!((q.area() - 2.0 * 16.0 * (std::f64::consts::PI / 16.0).sin()).abs() < 1e-12);
    let rect = PolygonSpec::Rectangle {
        min: [-1.0, 0.0],
        max: [1.0, 1.0],
    };
    assert_eq!(rect.vertex_list().unwrap()[0], Vec2::new(-1.0, 0.0));
    let smooth = PolygonSpec::SmoothedCorner {
        beta: 0.5,
        half_width: 1.0,
        segments: 12,
    };
    let s = smooth.build().unwrap();
    assert_eq!(s.len(), 25);
    assert!(s.vertices().iter().all(|v| v.y >= v.x.abs().powf(1.5) - 1e-15));
    assert!(PolygonSpec::Square {
        center: [0.0, 0.0],
        half_width: 0.0
    }
    .build()
    .is_err());
}

#[test]
fn overrides_replace_only_given_fields() {
    let base = crate::regularity::RegularityParams::default();
    let o = ParamOverrides {
        slack: Some(0.2),
        min_cells: Some(7),
        ..Default::default()
    };
    let p = o.apply(&base);
    assert_eq!(p.slack, 0.2);
    assert_eq!(p.min_cells, 7);
    assert_eq!(p.ecc_cap, base.ecc_cap);
}

#[test]
fn hash_tracks_the_effective_scenario() {
    let s = minimal();
    let h = scenario_hash(&s);
    assert_eq!(h.len(), 64);
    assert_eq!(h, scenario_hash(&minimal()));
    let reseeded = effective(
        &s,
        &RunOptions {
            seed: Some(4),
            slack: None,
        },
    );
    assert_eq!(reseeded.seed, 4);
    assert_ne!(scenario_hash(&reseeded), h);
    let slack = effective(
        &s,
        &RunOptions {
            seed: None,
            slack: Some(0.1),
        },
    );
    assert_eq!(slack.params.slack, 0.1);
}

#[test]
fn run_records_rescale_and_payloads() {
    let run = run(&minimal(), &RunOptions::default()).unwrap();
    let r = &run.report;
    assert_eq!(r.error, None);
    // Target density 2 on the same square: masses are halved.
    assert!((r.mass_rescale.unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(r.solver.as_ref().unwrap().seed, Some(3));
    let names: Vec<&str> = r.outputs.iter().map(|o| o.diagnostic.as_str()).collect();
    assert_eq!(names, ["sections", "chi"]);
    for o in &r.outputs {
        assert!(o.csv.starts_with(&format!("# scenario_hash = {}\n", r.scenario_hash)));
    }
    let chi = &r.outputs[1].csv;
    assert!(chi.contains("# exponent = "));
    assert!(chi.lines().any(|l| l == "r,mass,chi"));
    // No expectations given, so the run passes.
    assert_eq!(r.status, Status::Pass);
}

#[test]
fn solver_failure_becomes_a_fail_report() {
    // (y)₊ vanishes on a target below the x-axis, so sampling fails.
    let text = MINIMAL.replace(
        "[target_density]\nkind = \"uniform\"\nc = 2.0",
        "[target_density]\nkind = \"monomial_yn\"\nc = 1.0\nk = 1.0",
    );
    let text = text.replace(
        "[target]\nshape = \"square\"\nhalf_width = 1.0",
        "[target]\nshape = \"rectangle\"\nmin = [-1.0, -2.0]\nmax = [1.0, -1.0]",
    );
    let s = Scenario::from_toml(&text).unwrap();
    let run = run(&s, &RunOptions::default()).unwrap();
    assert_eq!(run.report.status, Status::Fail);
    assert!(run.report.error.as_deref().unwrap().contains("sampling"));
    assert!(run.plan.is_none());
}

#[test]
fn replay_checks_the_diagnostic_name() {
    let s = minimal();
    let run = run(&s, &RunOptions::default()).unwrap();
    let plan = run.plan.as_ref().unwrap();
    let only = replay(plan, &run.scenario, Some("chi")).unwrap();
    assert_eq!(only.outputs.len(), 1);
    assert_eq!(only.outputs[0], run.report.outputs[1]);
    assert!(matches!(replay(plan, &s, Some("blowup")), Err(LabError::Usage(_))));
}

#[test]
fn suite_rejects_empty_and_duplicate_lists() {
    assert!(matches!(suite(&[], &RunOptions::default(), 1), Err(LabError::Usage(_))));
    let s = minimal();
    match suite(&[s.clone(), s], &RunOptions::default(), 1) {
        Err(LabError::Config(m)) => assert!(m.contains("duplicate"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn expectations_turn_into_checks() {
    let mut s = minimal();
    s.expected.max_sandwich_defect = Some(1e-6);
    s.expected.min_obliqueness = Some(0.0);
    let run = run(&s, &RunOptions::default()).unwrap();
    let checks = &run.report.checks;
    let sandwich = checks.iter().find(|c| c.name == "sandwich inclusions").unwrap();
    assert!(sandwich.passed, "{}", sandwich.detail);
    // No obliqueness diagnostic was configured, so its expectation fails.
    let obl = checks.iter().find(|c| c.name == "obliqueness").unwrap();
    assert!(!obl.passed);
    assert_eq!(run.report.status, Status::Fail);
    let summary = Summary::of(std::slice::from_ref(&run));
    assert_eq!((summary.passed, summary.failed), (0, 1));
    assert!(summary.scenarios[0].failed_checks[0].contains("obliqueness"));
}
