//! Execution of the diagnostics of one scenario on a solved plan, and the
//! checks of their results against the scenario's expectations.

use super::scenario::{DiagnosticSpec, Expected, Resolved, Scenario, SlopeExpectation};
use super::{Check, DiagnosticOutput};
use crate::cones::{self, ConePair};
use crate::convex2d::{point_segment_distance, tangent_cone, vertex_index, Polygon, Sector, Vec2, TOL_GEOM};
use crate::regularity::{
    blowup_rescale, chi_trace, obliqueness_check, roundness_profile, sandwich_defect,
    trusted_heights, trusted_radii, unit_disk_samples, v_proxy_profile, BasePoint, Fit,
    RegularityError, SectionProfile, Verdict,
};
use crate::sdot::TransportPlan;
use serde_json::{json, Value};
use std::fmt::Write;

/// Scientific notation with 17 significant digits.
pub(crate) fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Predictions quoted in the comment header of a CSV payload.
const PREDICTIONS: [&str; 6] = ["l", "k", "exponent", "predicted_beta", "degree", "verdict"];

fn preamble(hash: &str, bp: usize, x0: Vec2, summary: &Value) -> String {
    let mut out = format!("# scenario_hash = {hash}\n# base_point = {bp}\n# x0 = {} {}\n", num(x0.x), num(x0.y));
    for key in PREDICTIONS {
        match summary.get(key) {
            Some(Value::Number(n)) => {
                let _ = writeln!(out, "# {key} = {}", num(n.as_f64().unwrap_or(f64::NAN)));
            }
            Some(Value::String(v)) => {
                let _ = writeln!(out, "# {key} = {v}");
            }
            _ => {}
        }
    }
    out
}

fn fit_json(f: &Fit) -> Value {
    json!({
        "slope": f.slope,
        "intercept": f.intercept,
        "half_width": f.half_width,
        "samples": f.samples,
    })
}

fn sector_deg(s: &Sector) -> (f64, f64) {
    (s.theta_lo().to_degrees(), s.theta_hi().to_degrees())
}

/// Tangent cone at a vertex, or the inner half-plane at a point in the
/// relative interior of an edge.
fn cone_at(p: &Polygon, x: Vec2, what: &str) -> Result<Sector, String> {
    let tol = TOL_GEOM * p.diameter().max(1.0);
    if let Some(i) = vertex_index(p, x, tol) {
        return tangent_cone(p, i).map_err(|e| e.to_string());
    }
    let (a, b) = p
        .edges()
        .find(|&(a, b)| point_segment_distance(x, a, b) <= tol)
        .ok_or_else(|| format!("({}, {}) is not on the boundary of the {what}", x.x, x.y))?;
    Sector::from_lo_span((b - a).angle(), std::f64::consts::PI).map_err(|e| e.to_string())
}

/// Homogeneity degrees `(l, k)` of the source and target densities; a
/// density without one counts as degree 0.
fn degrees(res: &Resolved) -> (f64, f64) {
    (
        res.source_density.homogeneity_degree().unwrap_or(0.0),
        res.target_density.homogeneity_degree().unwrap_or(0.0),
    )
}

/// What one base point produced, for the cross-diagnostic checks.
#[derive(Default)]
struct Findings {
    roundness: Option<SectionProfile>,
    proxy: Option<(Fit, Fit)>,
    cone: Option<cones::Classification>,
    chi_violations: Option<usize>,
    sandwich: Option<f64>,
    obliqueness: Option<f64>,
    errors: Vec<(String, String)>,
}

/// Runs every diagnostic at every base point, in the listed order.
pub(crate) fn run_all(
    scenario: &Scenario,
    res: &Resolved,
    plan: &TransportPlan,
    only: Option<&str>,
    hash: &str,
) -> (Vec<DiagnosticOutput>, Vec<Check>) {
    let mut outputs = Vec::new();
    let mut checks = Vec::new();
    for (bp, &x0) in res.base_points.iter().enumerate() {
        let mut found = Findings::default();
        for spec in &scenario.diagnostics {
            if only.is_some_and(|o| o != spec.name()) {
                continue;
            }
            match run_one(spec, scenario, res, plan, x0, &mut found) {
                Ok(outs) => {
                    for (suffix, csv, summary) in outs {
                        outputs.push(DiagnosticOutput {
                            diagnostic: format!("{}{suffix}", spec.name()),
                            base_point: bp,
                            x0: [x0.x, x0.y],
                            csv: preamble(hash, bp, x0, &summary) + &csv,
                            summary,
                            error: None,
                        });
                    }
                }
                Err(e) => {
                    found.errors.push((spec.name().to_string(), e.clone()));
                    outputs.push(DiagnosticOutput {
                        diagnostic: spec.name().to_string(),
                        base_point: bp,
                        x0: [x0.x, x0.y],
                        csv: String::new(),
                        summary: Value::Null,
                        error: Some(e),
                    });
                }
            }
        }
        for (name, e) in &found.errors {
            checks.push(Check {
                name: format!("{name} ran"),
                base_point: Some(bp),
                passed: false,
                detail: e.clone(),
            });
        }
        if only.is_none() {
            expectations(scenario.expected_at(bp), &found, bp, &mut checks);
        }
    }
    (outputs, checks)
}

type Outputs = Vec<(&'static str, String, Value)>;

fn run_one(
    spec: &DiagnosticSpec,
    scenario: &Scenario,
    res: &Resolved,
    plan: &TransportPlan,
    x0: Vec2,
    found: &mut Findings,
) -> Result<Outputs, String> {
    let rerr = |e: RegularityError| e.to_string();
    let base = || BasePoint::at(plan, x0).map_err(rerr);
    match spec {
        DiagnosticSpec::Chi { radii, l, k, params } => {
            let p = params.apply(&scenario.params);
            let (l0, k0) = degrees(res);
            let (l, k) = (l.unwrap_or(l0), k.unwrap_or(k0));
            let b = base()?;
            let rs = trusted_radii(plan, &b, *radii, &p).map_err(rerr)?;
            let t = chi_trace(plan, &b, &res.source_density, l, k, &rs, &p).map_err(rerr)?;
            found.chi_violations = Some(t.violations.len());
            let rows: Vec<Vec<String>> = (0..t.radii.len())
                .map(|i| vec![num(t.radii[i]), num(t.masses[i]), num(t.chi[i])])
                .collect();
            let summary = json!({
                "l": l,
                "k": k,
                "exponent": t.exponent_used,
                "slack": p.slack,
                "violations": t.violations,
                "relative_variation": t.relative_variation(),
            });
            Ok(vec![("", csv(&["r", "mass", "chi"], &rows), summary)])
        }
        DiagnosticSpec::Sections { radii, params } => {
            let p = params.apply(&scenario.params);
            let b = base()?;
            let rs = trusted_radii(plan, &b, *radii, &p).map_err(rerr)?;
            let mut rows = Vec::new();
            let mut worst: f64 = 0.0;
            for r in rs {
                let d = sandwich_defect(plan, &b, r).map_err(rerr)?;
                worst = worst.max(d.relative());
                rows.push(vec![num(r), num(d.section_area), num(d.inner), num(d.outer), num(d.relative())]);
            }
            found.sandwich = Some(worst);
            let header = ["r", "section_area", "inner_defect", "outer_defect", "relative_defect"];
            Ok(vec![("", csv(&header, &rows), json!({ "max_relative_defect": worst }))])
        }
        DiagnosticSpec::Roundness {
            heights,
            predicted_beta,
            proxy,
            params,
        } => {
            let p = params.apply(&scenario.params);
            let (l, k) = degrees(res);
            let beta = predicted_beta.unwrap_or(1.0 / (1.0 + (2.0 + l) / (2.0 + k)));
            let b = base()?;
            let hs = trusted_heights(plan, &b, *heights, &p).map_err(rerr)?;
            let prof = roundness_profile(plan, x0, &hs, beta, &p).map_err(rerr)?;
            let rows: Vec<Vec<String>> = prof
                .samples
                .iter()
                .map(|s| {
                    vec![
                        num(s.h),
                        num(s.mass),
                        num(s.axis_major),
                        num(s.axis_minor),
                        num(s.eccentricity),
                        num(s.major_angle),
                        s.cells.to_string(),
                        s.trusted.to_string(),
                    ]
                })
                .collect();
            let header = [
                "h",
                "mass",
                "axis_major",
                "axis_minor",
                "eccentricity",
                "major_angle",
                "cells",
                "trusted",
            ];
            let (e_small, e_large) = prof.eccentricity_ends();
            let summary = json!({
                "predicted_beta": beta,
                "verdict": prof.verdict,
                "fit_major": fit_json(&prof.fit_major),
                "fit_minor": fit_json(&prof.fit_minor),
                "trusted": prof.trusted().count(),
                "max_trusted_eccentricity": prof.max_trusted_eccentricity(),
                "eccentricity_smallest_h": e_small,
                "eccentricity_largest_h": e_large,
                "nesting_violations": prof.nesting_violations,
            });
            let mut out: Outputs = vec![("", csv(&header, &rows), summary)];
            found.roundness = Some(prof);
            if *proxy {
                let pp = v_proxy_profile(plan, &b, &hs, &p).map_err(rerr)?;
                let rows: Vec<Vec<String>> = (0..pp.heights.len())
                    .map(|i| {
                        vec![
                            num(pp.heights[i]),
                            num(pp.axis_major[i]),
                            num(pp.axis_minor[i]),
                            pp.trusted[i].to_string(),
                        ]
                    })
                    .collect();
                let summary = json!({
                    "fit_major": fit_json(&pp.fit_major),
                    "fit_minor": fit_json(&pp.fit_minor),
                });
                found.proxy = Some((pp.fit_major, pp.fit_minor));
                out.push(("_proxy", csv(&["h", "axis_major", "axis_minor", "trusted"], &rows), summary));
            }
            Ok(out)
        }
        DiagnosticSpec::Classify { target_vertex } => {
            let y0 = target_vertex.map_or(Vec2::ZERO, |v| Vec2::new(v[0], v[1]));
            let c = cone_at(&res.source, x0, "source")?;
            let cp = cone_at(&res.target, y0, "target")?;
            let pair = ConePair::new(c, cp).map_err(|e| e.to_string())?;
            let cl = cones::classify(&pair);
            let (a, b) = sector_deg(&c);
            let (ap, bp) = sector_deg(&cp);
            let q = cl.witness.map(|w| w.q);
            let qv = |f: fn(&crate::convex2d::Sym2) -> f64| q.as_ref().map_or(f64::NAN, f);
            let row = vec![
                num(a),
                num(b),
                num(ap),
                num(bp),
                cl.verdict.to_string(),
                cl.family_dimension.to_string(),
                num(qv(|q| q.a)),
                num(qv(|q| q.b)),
                num(qv(|q| q.c)),
            ];
            let header = [
                "source_lo_deg",
                "source_hi_deg",
                "target_lo_deg",
                "target_hi_deg",
                "verdict",
                "family_dimension",
                "q11",
                "q12",
                "q22",
            ];
            let summary = json!({
                "verdict": cl.verdict,
                "family_dimension": cl.family_dimension,
                "witness": q.map(|q| [num(q.a), num(q.b), num(q.c)]),
            });
            found.cone = Some(cl);
            Ok(vec![("", csv(&header, &[row]), summary)])
        }
        DiagnosticSpec::Blowup { heights, params } => {
            let p = params.apply(&scenario.params);
            let (l, k) = degrees(res);
            let degree = 1.0 + (2.0 + l) / (2.0 + k);
            let b = base()?;
            let hs = trusted_heights(plan, &b, 2 * heights, &p).map_err(rerr)?;
            let pts = unit_disk_samples(4);
            let mut rows = Vec::new();
            let mut prev = None;
            let mut worst: f64 = 0.0;
            for &h in hs.iter().take(*heights) {
                let bu = blowup_rescale(plan, x0, h, &p).map_err(rerr)?;
                let (a, m) = bu.ellipse.axes();
                let defect = bu.homogeneity_defect(0.5, degree, &pts);
                worst = worst.max(defect);
                let dist = prev.as_ref().map_or(f64::NAN, |q| bu.sup_distance(q, &pts));
                rows.push(vec![num(h), num(a), num(m), num(defect), num(dist)]);
                prev = Some(bu);
            }
            let header = ["h", "axis_major", "axis_minor", "homogeneity_defect", "distance_to_previous"];
            let summary = json!({ "degree": degree, "max_homogeneity_defect": worst });
            Ok(vec![("", csv(&header, &rows), summary)])
        }
        DiagnosticSpec::Obliqueness { target_vertex } => {
            let y0 = target_vertex.map_or(Vec2::ZERO, |v| Vec2::new(v[0], v[1]));
            let c = obliqueness_check(&res.source, &res.target, x0, y0).map_err(rerr)?;
            found.obliqueness = Some(c);
            Ok(vec![("", csv(&["cosine"], &[vec![num(c)]]), json!({ "cosine": c }))])
        }
    }
}

fn slope_check(name: &str, e: &SlopeExpectation, major: &Fit, minor: &Fit) -> (bool, String) {
    let ok = major.within(e.major, e.tol) && minor.within(e.minor, e.tol);
    let mut d = String::new();
    let _ = write!(
        d,
        "{name} major {:.4} (expected {:.4} ± {}), minor {:.4} (expected {:.4} ± {})",
        major.slope, e.major, e.tol, minor.slope, e.minor, e.tol
    );
    (ok, d)
}

/// Axis direction distance modulo 180°, in degrees.
fn axial_gap_deg(a_rad: f64, b_deg: f64) -> f64 {
    let d = (a_rad.to_degrees() - b_deg).rem_euclid(180.0);
    d.min(180.0 - d)
}

fn expectations(e: &Expected, f: &Findings, bp: usize, checks: &mut Vec<Check>) {
    let mut push = |name: &str, r: Option<(bool, String)>| {
        let (passed, detail) = r.unwrap_or((false, "required diagnostic did not produce a result".into()));
        checks.push(Check {
            name: name.to_string(),
            base_point: Some(bp),
            passed,
            detail,
        });
    };
    if let Some(v) = e.roundness {
        push(
            "roundness verdict",
            f.roundness
                .as_ref()
                .map(|p| (p.verdict == v, format!("verdict {} (expected {v})", p.verdict))),
        );
    }
    if let Some(v) = e.cone {
        push(
            "cone classification",
            f.cone
                .as_ref()
                .map(|c| (c.verdict == v, format!("verdict {} (expected {v})", c.verdict))),
        );
    }
    if e.verdict_matches_classify {
        let r = match (&f.roundness, &f.cone) {
            (Some(p), Some(c)) => {
                let expected = if c.witness.is_some() { Verdict::Round } else { Verdict::NonRound };
                Some((
                    p.verdict == expected,
                    format!("roundness {} with cone verdict {} (expects {expected})", p.verdict, c.verdict),
                ))
            }
            _ => None,
        };
        push("roundness agrees with classification", r);
    }
    if let Some(s) = &e.section_slopes {
        push(
            "section slopes",
            f.roundness
                .as_ref()
                .map(|p| slope_check("section", s, &p.fit_major, &p.fit_minor)),
        );
    }
    if let Some(s) = &e.proxy_slopes {
        push(
            "proxy slopes",
            f.proxy.as_ref().map(|(a, b)| slope_check("proxy", s, a, b)),
        );
    }
    if let Some(cap) = e.max_eccentricity {
        push(
            "eccentricity",
            f.roundness.as_ref().map(|p| {
                let m = p.max_trusted_eccentricity();
                (m <= cap, format!("max trusted eccentricity {m:.4} (cap {cap})"))
            }),
        );
    }
    if let Some(a) = &e.major_angle {
        push(
            "major axis direction",
            f.roundness.as_ref().map(|p| {
                let worst = p
                    .trusted()
                    .map(|s| axial_gap_deg(s.major_angle, a.deg))
                    .fold(0.0, f64::max);
                (
                    worst <= a.tol_deg,
                    format!("largest deviation {worst:.2}° from {}° (tolerance {}°)", a.deg, a.tol_deg),
                )
            }),
        );
    }
    if let Some(m) = e.max_chi_violations {
        push(
            "chi monotonicity",
            f.chi_violations.map(|v| (v <= m, format!("{v} violations (allowed {m})"))),
        );
    }
    if let Some(m) = e.max_sandwich_defect {
        push(
            "sandwich inclusions",
            f.sandwich
                .map(|d| (d <= m, format!("largest relative defect {d:.3e} (bound {m:e})"))),
        );
    }
    if let Some(m) = e.min_obliqueness {
        push(
            "obliqueness",
            f.obliqueness.map(|c| (c >= m, format!("cosine {c:.6} (minimum {m})"))),
        );
    }
}
