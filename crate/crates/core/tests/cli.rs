use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
name = "tiny"
seed = 5
sites = 80

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
c = 1.0

[[base_points]]
point = [0.1, 0.0]

[[diagnostics]]
kind = "sections"
radii = 4
params = { min_cells = 5 }

[[diagnostics]]
kind = "chi"
radii = 5
params = { min_cells = 5 }

[expected]
max_sandwich_defect = 1e-6
"#;

fn otlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_tiny(dir: &Path, name: &str, extra: &str) -> String {
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, TINY.replace("name = \"tiny\"", &format!("name = \"{name}\"")) + extra).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn exponents_and_classify() {
    let o = otlab(&["exponents", "--l", "0", "--k", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let t: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((t["beta_u"].as_f64().unwrap() - 0.6).abs() < 1e-15);
    let o = otlab(&["classify", "--source", "0,90", "--target", "20,70"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: Acute"), "{}", stdout(&o));
    let o = otlab(&["classify", "--source", "0,90", "--target", "-30,60"]);
    assert!(stdout(&o).contains("NoHomogeneousMap"));
    assert!(stdout(&o).contains("q: none"));
    let o = otlab(&["classify", "--source", "0", "--target", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_outputs_and_replay_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path(), "tiny", "");
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = otlab(&["--out-dir", out_s, "run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).starts_with("PASS tiny"));
    let run_dir = out.join("tiny");
    for f in ["report.json", "scenario.toml", "plan.json", "sections_bp0.csv", "chi_bp0.csv"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    // A second process gives byte-identical files.
    let out2 = dir.path().join("out2");
    let o = otlab(&["--quiet", "--out-dir", out2.to_str().unwrap(), "run", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    for f in ["report.json", "plan.json", "chi_bp0.csv"] {
        assert_eq!(fs::read(run_dir.join(f)).unwrap(), fs::read(out2.join("tiny").join(f)).unwrap(), "{f}");
    }
    // Replay from the stored plan.
    let plan = run_dir.join("plan.json");
    let o = otlab(&["--out-dir", out_s, "replay", plan.to_str().unwrap(), "chi"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(run_dir.join("chi_bp0.csv")).unwrap(),
        fs::read(out.join("tiny-replay").join("chi_bp0.csv")).unwrap()
    );
    let o = otlab(&["--out-dir", out_s, "replay", plan.to_str().unwrap(), "blowup"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_expectation_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path(), "strict", "min_obliqueness = 0.5\n");
    let o = otlab(&["--out-dir", dir.path().join("out").to_str().unwrap(), "run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL strict"));
    assert!(stdout(&o).contains("FAIL [bp0] obliqueness"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = otlab(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, TINY.replace("sites = 80", "sites = 80\ncolour = 1")).unwrap();
    let o = otlab(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
    assert!(stderr(&o).contains("bad.toml"));
}

#[test]
fn suite_aggregates_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = dir.path().join("scenarios");
    fs::create_dir(&scenarios).unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = otlab(&["--out-dir", out_s, "suite", scenarios.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least one scenario"));

    write_tiny(&scenarios, "a", "");
    write_tiny(&scenarios, "b", "");
    let o = otlab(&["--jobs", "2", "--out-dir", out_s, "suite", scenarios.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "PASS");
    assert_eq!(summary["passed"], 2);

    // The file name does not set the scenario name; two files named "a".
    fs::write(scenarios.join("c.toml"), TINY.replace("name = \"tiny\"", "name = \"a\"")).unwrap();
    let o = otlab(&["--out-dir", out_s, "suite", scenarios.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate"));
}
