//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

mod common;

use otlab::cones::{self, ConePair};
use otlab::convex2d::{Sector, Sym2, Vec2};
use otlab::lab::{self, DiagnosticOutput, Run, RunOptions};
use otlab::measures::{Density, DensityKind};
use otlab::regularity::{chi_trace_analytic, RegularityParams};
use otlab::sdot::TransportPlan;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::time::Instant;

const SLOPE_TOL: f64 = 0.07;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Rows of a CSV payload, skipping the `#` header comments.
fn rows(o: &DiagnosticOutput) -> Vec<HashMap<String, String>> {
    let body: String = o.csv.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn col(row: &HashMap<String, String>, name: &str) -> f64 {
    row[name].parse().unwrap()
}

fn outputs<'a>(run: &'a Run, diagnostic: &'a str) -> impl Iterator<Item = &'a DiagnosticOutput> + 'a {
    run.report.outputs.iter().filter(move |o| o.diagnostic == diagnostic)
}

fn summary_f64(o: &DiagnosticOutput, path: &[&str]) -> f64 {
    let mut v = &o.summary;
    for p in path {
        v = &v[*p];
    }
    v.as_f64().unwrap_or(f64::NAN)
}

fn near(x: f64, target: f64) -> bool {
    (x - target).abs() <= SLOPE_TOL
}

/// Section slopes of every roundness payload of a run, checked per axis.
fn slopes(run: &Run, diagnostic: &str, major: f64, minor: f64, log: &mut Vec<String>) -> bool {
    let mut ok = true;
    let mut seen = false;
    for o in outputs(run, diagnostic) {
        seen = true;
        let a = summary_f64(o, &["fit_major", "slope"]);
        let b = summary_f64(o, &["fit_minor", "slope"]);
        ok &= near(a, major) && near(b, minor);
        log.push(format!("{} bp{} {diagnostic} {a:.3}/{b:.3}", run.report.scenario, o.base_point));
    }
    ok && seen
}

fn trusted_rows(o: &DiagnosticOutput) -> Vec<HashMap<String, String>> {
    rows(o).into_iter().filter(|r| r["trusted"] == "true").collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let radii: Vec<f64> = (0..25).map(|j| 1e-3 * 1e3f64.powf(j as f64 / 24.0)).collect();
    let params = RegularityParams::default();
    let q = Sym2::new(1.7, -0.4, 0.9);
    let mut worst: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    for deg in [60.0, 90.0, 135.0] {
        let s = Sector::from_degrees(10.0, 10.0 + deg).unwrap();
        let uniform = chi_trace_analytic(q, &s, &Density::uniform(1.0), 0.0, 0.0, &radii, &params).unwrap();
        // Independent value: D_r = {xᵀQx ≤ r²} ∩ sector has area
        // (r²/2)∫dθ/(e_θᵀQe_θ), so χ = ½∫dθ/(e_θᵀQe_θ). Midpoint rule.
        let m = 200_000;
        let h = s.span() / m as f64;
        let exact: f64 = (0..m)
            .map(|i| {
                let e = Vec2::from_angle(s.theta_lo() + (i as f64 + 0.5) * h);
                0.5 * h / q.quad(e)
            })
            .sum();
        oracle_gap = oracle_gap.max((uniform.chi[0] - exact).abs() / exact);
        let radial = Density::new(DensityKind::RadialHomog {
            c: 1.0,
            l: 1.0,
            profile: vec![],
        })
        .unwrap();
        let weighted = chi_trace_analytic(q, &s, &radial, 1.0, 1.0, &radii, &params).unwrap();
        worst = worst.max(uniform.relative_variation()).max(weighted.relative_variation());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && oracle_gap <= 1e-8 && secs < 1.0,
        format!("max relative variation {worst:.2e} (≤ 1e-6), oracle gap {oracle_gap:.1e}, {secs:.3} s (< 1 s)"),
    )
}

fn criterion_2(identity: &Run, secs: f64) -> Outcome {
    let mut ok = secs < 60.0;
    let mut parts = Vec::new();
    let chis: Vec<&DiagnosticOutput> = outputs(identity, "chi").collect();
    ok &= chis.len() == 2;
    for o in chis {
        let r = rows(o);
        let violations = o.summary["violations"].as_array().map_or(usize::MAX, |v| v.len());
        let slack = summary_f64(o, &["slack"]);
        // Recount violations from the payload at the pinned slack.
        let recount = r
            .windows(2)
            .filter(|w| col(&w[1], "chi") > col(&w[0], "chi") * 1.05)
            .count();
        ok &= r.len() == 20 && violations == 0 && recount == 0 && slack == 0.05;
        parts.push(format!("bp{}: {} radii, {recount} violations", o.base_point, r.len()));
    }
    outcome(ok, format!("{}; run {secs:.1} s (< 60 s)", parts.join(", ")))
}

fn criterion_3(runs: &[Run]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut count = 0;
    for run in runs {
        let sections: Vec<&DiagnosticOutput> = outputs(run, "sections").collect();
        ok &= run.plan.is_some() && !sections.is_empty();
        for o in sections {
            let r = rows(o);
            ok &= o.error.is_none() && r.len() == 10;
            for row in &r {
                let area = col(row, "section_area");
                worst = worst.max(col(row, "inner_defect") / area).max(col(row, "outer_defect") / area);
            }
            count += 1;
        }
    }
    outcome(
        ok && worst <= 1e-6,
        format!("{count} profiles over {} plans, largest relative defect {worst:.2e} (≤ 1e-6)", runs.len()),
    )
}

fn criterion_4(by_name: &HashMap<&str, &Run>) -> Outcome {
    let mut log = Vec::new();
    let mut ok = true;
    for name in ["identity-square", "linear-map"] {
        let run = by_name[name];
        ok &= slopes(run, "roundness", 0.5, 0.5, &mut log);
        for o in outputs(run, "roundness") {
            let ecc = trusted_rows(o).iter().map(|r| col(r, "eccentricity")).fold(0.0, f64::max);
            ok &= ecc <= 1.5;
            log.push(format!("ecc {ecc:.3}"));
        }
    }
    outcome(ok, log.join(", "))
}

fn criterion_5(by_name: &HashMap<&str, &Run>) -> Outcome {
    let mut log = Vec::new();
    let mut ok = true;
    for name in ["corner-acute", "corner-right", "corner-obtuse", "no-homog-corner"] {
        let run = by_name[name];
        let (Some(round), Some(class)) = (outputs(run, "roundness").next(), outputs(run, "classify").next()) else {
            ok = false;
            log.push(format!("{name}: missing payload"));
            continue;
        };
        let verdict = round.summary["verdict"].as_str().unwrap_or("?").to_string();
        let cone = class.summary["verdict"].as_str().unwrap_or("?").to_string();
        let witness = !class.summary["witness"].is_null();
        let agrees = (verdict == "ROUND") == witness && (verdict == "NON_ROUND") == !witness;
        ok &= agrees;
        if name == "no-homog-corner" {
            let t = trusted_rows(round);
            let ratio = col(&t[0], "eccentricity") / col(&t[t.len() - 1], "eccentricity");
            ok &= verdict == "NON_ROUND" && cone == "NoHomogeneousMap" && ratio >= 2.0;
            log.push(format!("{name}: {verdict}/{cone}, eccentricity ratio {ratio:.2} (≥ 2)"));
        } else {
            ok &= verdict == "ROUND" && slopes(run, "roundness", 0.5, 0.5, &mut log);
            log.push(format!("{name}: {verdict}/{cone}"));
        }
    }
    outcome(ok, log.join(", "))
}

fn criterion_6(by_name: &HashMap<&str, &Run>) -> Outcome {
    let mut log = Vec::new();
    let ok = slopes(by_name["degenerate-k1"], "roundness", 0.6, 0.6, &mut log)
        & slopes(by_name["degenerate-k1"], "roundness_proxy", 0.4, 0.4, &mut log)
        & slopes(by_name["degenerate-k2"], "roundness", 2.0 / 3.0, 2.0 / 3.0, &mut log)
        & slopes(by_name["degenerate-k2"], "roundness_proxy", 1.0 / 3.0, 1.0 / 3.0, &mut log);
    outcome(ok, log.join(", "))
}

fn criterion_7(by_name: &HashMap<&str, &Run>) -> Outcome {
    let run = by_name["mixed-m1-k1"];
    let mut log = Vec::new();
    let mut ok = slopes(run, "roundness", 0.5, 2.0 / 3.0, &mut log);
    for o in outputs(run, "roundness") {
        // Flat direction is the x-axis; axes are undirected.
        let worst = trusted_rows(o)
            .iter()
            .map(|r| {
                let d = col(r, "major_angle").to_degrees().rem_euclid(180.0);
                d.min(180.0 - d)
            })
            .fold(0.0, f64::max);
        ok &= worst <= 10.0;
        log.push(format!("major axis within {worst:.2}° of the flat side (≤ 10°)"));
    }
    outcome(ok, log.join(", "))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    let mut det_err: f64 = 0.0;
    let mut ray_err: f64 = 0.0;
    let mut dual_err: f64 = 0.0;
    let mut failures = 0;
    while checked < 100 {
        let s = Sector::from_lo_span(rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.2..std::f64::consts::PI))
            .unwrap();
        let t = Sector::from_lo_span(rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.2..std::f64::consts::PI))
            .unwrap();
        let Ok(pair) = ConePair::new(s, t) else { continue };
        if cones::classify(&pair).witness.is_none() {
            continue;
        }
        checked += 1;
        let Ok(w) = cones::solve_quadratic(&pair, None) else {
            failures += 1;
            continue;
        };
        det_err = det_err.max((w.q.det() - 1.0).abs());
        for (e, f) in [(s.lo_ray(), t.lo_ray()), (s.hi_ray(), t.hi_ray())] {
            let g = w.gradient(e).normalized();
            let miss = if g.dot(f) > 0.0 { g.cross(f).abs() } else { f64::INFINITY };
            ray_err = ray_err.max(miss);
        }
        let inv = w.dual();
        for k in 0..8 {
            let x = Vec2::from_angle(s.theta_lo() + s.span() * (k as f64 + 0.5) / 8.0);
            dual_err = dual_err.max((inv.gradient(w.gradient(x)) - x).norm());
        }
    }
    let mut ode: f64 = 0.0;
    for _ in 0..20 {
        let p = cones::ode_profile(
            rng.gen_range(0.25..4.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.25..4.0),
            (-2.0, 2.0),
            201,
        );
        ode = ode.max(p.map_or(f64::INFINITY, |p| p.max_residual()));
    }
    outcome(
        failures == 0 && det_err <= 1e-12 && ray_err <= 1e-12 && dual_err <= 1e-12 && ode <= 1e-8,
        format!(
            "{checked} pairs: |det Q − 1| {det_err:.1e}, ray error {ray_err:.1e}, dual error {dual_err:.1e}; \
             20 ODE profiles: residual {ode:.1e} (≤ 1e-8)"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cost_gap: f64 = 0.0;
    let mut hess: f64 = 0.0;
    for _ in 0..20 {
        let n = common::SITE_COUNTS[rng.gen_range(0..common::SITE_COUNTS.len())];
        let sites = common::random_sites(&mut rng, n);
        let plan = common::solve_equal_masses(&sites);
        let semi = plan.transport_cost().unwrap();
        let exact = common::assignment_cost(&sites);
        cost_gap = cost_gap.max((semi - exact).abs() / exact);
        hess = hess.max(common::hessian_fd_error(&plan));
    }
    outcome(
        cost_gap <= 0.01 && hess <= 1e-4,
        format!("20 instances: cost gap {:.3}% (≤ 1%), Hessian vs differences {hess:.1e} (≤ 1e-4)", 100.0 * cost_gap),
    )
}

fn criterion_10(first: &Run, by_name: &HashMap<&str, &Run>) -> Outcome {
    let opts = RunOptions::default();
    let again = lab::run(&first.scenario, &opts).unwrap();
    let same_report = again.report.to_json() == first.report.to_json();
    // A scenario run inside the parallel suite matches a standalone run.
    let corner = by_name["corner-acute"];
    let alone = lab::run(&corner.scenario, &opts).unwrap();
    let same_suite = alone.report.to_json() == corner.report.to_json();
    // Save, reload and replay every diagnostic.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    let plan = first.plan.as_ref().unwrap();
    plan.save(&path).unwrap();
    let loaded = TransportPlan::load(&path).unwrap();
    let resaved = loaded.to_json().unwrap() == plan.to_json().unwrap();
    let replayed = lab::replay(&loaded, &first.scenario, None).unwrap();
    let same_replay = replayed.outputs == first.report.outputs && replayed.checks == first.report.checks;
    outcome(
        same_report && same_suite && resaved && same_replay,
        format!(
            "repeat run identical: {same_report}, suite vs standalone: {same_suite}, \
             plan re-save: {resaved}, replay after reload: {same_replay}"
        ),
    )
}

fn main() {
    let names = [
        "χ rigidity on conical solutions",
        "χ monotonicity on the solved identity plan",
        "sandwich inclusions on every solved plan",
        "interior scaling exponent 1/2",
        "corner classification against roundness",
        "degenerate-density exponents",
        "mixed homogeneity",
        "quadratic witnesses and ODE profiles",
        "solver against exact assignment",
        "determinism and persistence",
    ];
    let mut results: Vec<Outcome> = Vec::new();
    results.push(criterion_1());

    let scenarios = lab::builtin().unwrap();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let identity = lab::run(&scenarios[0], &RunOptions::default()).unwrap();
    let identity_secs = start.elapsed().as_secs_f64();
    let runs = lab::suite(&scenarios, &RunOptions::default(), jobs).unwrap();
    let by_name: HashMap<&str, &Run> = runs.iter().map(|r| (r.report.scenario.as_str(), r)).collect();

    results.push(criterion_2(&identity, identity_secs));
    results.push(criterion_3(&runs));
    results.push(criterion_4(&by_name));
    results.push(criterion_5(&by_name));
    results.push(criterion_6(&by_name));
    results.push(criterion_7(&by_name));
    results.push(criterion_8());
    results.push(criterion_9());
    results.push(criterion_10(&identity, &by_name));

    let mut failed = 0;
    for (i, (name, r)) in names.iter().zip(&results).enumerate() {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status}: {name}: {}", i + 1, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
}
