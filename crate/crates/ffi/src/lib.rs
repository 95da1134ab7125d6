//! C ABI for `otlab`: solve, persist and query transport plans, classify
//! cone pairs, tabulate exponents and run scenario files.
//!
//! Every fallible function returns an [`OtlabStatus`]. On failure the
//! message is available from [`otlab_last_error`] on the same thread until
//! the next failing call. Plans are opaque handles released with
//! [`otlab_plan_free`].

use otlab::cones::{self, ConePair};
use otlab::convex2d::{Polygon, Sector, Vec2};
use otlab::lab::{self, RunOptions, Status};
use otlab::measures::{integrate, Density, Quadrature};
use otlab::sdot::{solve, SolveOptions, TargetCloud, TransportPlan};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Solver = 4,
    Config = 5,
    /// A scenario ran but at least one check failed.
    ScenarioFailed = 6,
    Panic = 7,
}

/// Verdicts of the cone classification.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtlabConeVerdict {
    HalfSpace = 0,
    Acute = 1,
    RightAngle = 2,
    Obtuse = 3,
    NoHomogeneousMap = 4,
}

/// Exponent table; undefined entries are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtlabExponents {
    pub alpha: f64,
    pub deg_u: f64,
    pub deg_v: f64,
    pub beta_u: f64,
    pub beta_v: f64,
    pub beta_flat: f64,
    pub beta_cone_u: f64,
    pub beta_cone_v: f64,
    pub gamma_vol: f64,
    pub chi_exponent: f64,
    pub kappa_star: f64,
}

/// A solved semi-discrete transport plan.
pub struct OtlabPlan {
    plan: TransportPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: OtlabStatus, msg: impl Into<String>) -> OtlabStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`OtlabStatus::Panic`].
fn guard(f: impl FnOnce() -> OtlabStatus) -> OtlabStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(OtlabStatus::Panic, "internal panic"))
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, OtlabStatus> {
    if p.is_null() {
        return Err(fail(OtlabStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(OtlabStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn points<'a>(xy: *const f64, n: usize) -> &'a [f64] {
    std::slice::from_raw_parts(xy, 2 * n)
}

fn to_vec2(xy: &[f64]) -> Vec<Vec2> {
    xy.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

/// Solves the transport from the uniform density on the convex polygon
/// `source_xy` (`n_source` counter-clockwise vertices, interleaved x, y) to
/// `n_sites` points `sites_xy`. `masses` may be null for equal masses;
/// otherwise the masses are rescaled to the source area.
///
/// # Safety
/// The arrays must hold `2·n_source`, `2·n_sites` and `n_sites` values;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_solve(
    source_xy: *const f64,
    n_source: usize,
    sites_xy: *const f64,
    masses: *const f64,
    n_sites: usize,
    out: *mut *mut OtlabPlan,
) -> OtlabStatus {
    guard(|| {
        if source_xy.is_null() || sites_xy.is_null() || out.is_null() {
            return fail(OtlabStatus::NullArgument, "source, sites and out must not be null");
        }
        *out = ptr::null_mut();
        if n_sites == 0 {
            return fail(OtlabStatus::InvalidArgument, "need at least one site");
        }
        let source = match Polygon::new(to_vec2(points(source_xy, n_source))) {
            Ok(p) if p.area() > 0.0 => p,
            Ok(_) => return fail(OtlabStatus::InvalidArgument, "source polygon has zero area"),
            Err(e) => return fail(OtlabStatus::InvalidArgument, format!("source polygon: {e}")),
        };
        let g = Density::uniform(1.0);
        let mu = match integrate(&g, &source, &Quadrature::default()) {
            Ok(m) => m,
            Err(e) => return fail(OtlabStatus::InvalidArgument, e.to_string()),
        };
        let sites = to_vec2(points(sites_xy, n_sites));
        let mut cloud = TargetCloud::equal_masses(sites, mu);
        if !masses.is_null() {
            let m = std::slice::from_raw_parts(masses, n_sites);
            let total: f64 = m.iter().sum();
            if !(total > 0.0) || m.iter().any(|x| !(*x > 0.0)) {
                return fail(OtlabStatus::InvalidArgument, "masses must be positive");
            }
            cloud.masses = m.iter().map(|x| x * mu / total).collect();
        }
        match solve(&source, &g, &cloud, None, &SolveOptions::default()) {
            Ok(plan) => {
                *out = Box::into_raw(Box::new(OtlabPlan { plan }));
                OtlabStatus::Ok
            }
            Err(e) => fail(OtlabStatus::Solver, e.to_string()),
        }
    })
}

/// Loads a plan document written by [`otlab_plan_save`] or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_load(path: *const c_char, out: *mut *mut OtlabPlan) -> OtlabStatus {
    guard(|| {
        if out.is_null() {
            return fail(OtlabStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match TransportPlan::load(path) {
            Ok(plan) => {
                *out = Box::into_raw(Box::new(OtlabPlan { plan }));
                OtlabStatus::Ok
            }
            Err(e) => fail(OtlabStatus::Io, e.to_string()),
        }
    })
}

/// # Safety
/// `plan` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_save(plan: *const OtlabPlan, path: *const c_char) -> OtlabStatus {
    guard(|| {
        let Some(p) = plan.as_ref() else {
            return fail(OtlabStatus::NullArgument, "plan is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match p.plan.save(path) {
            Ok(()) => OtlabStatus::Ok,
            Err(e) => fail(OtlabStatus::Io, e.to_string()),
        }
    })
}

/// Releases a plan; null is ignored.
///
/// # Safety
/// `plan` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_free(plan: *mut OtlabPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Number of sites; 0 for a null plan.
///
/// # Safety
/// `plan` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_num_sites(plan: *const OtlabPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.plan.len())
}

/// Largest relative cell mass error of the solve; NaN for a null plan.
///
/// # Safety
/// `plan` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_residual(plan: *const OtlabPlan) -> f64 {
    plan.as_ref().map_or(f64::NAN, |p| p.plan.meta.residual)
}

/// Copies the dual weights into `out`, which holds `len` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_weights(plan: *const OtlabPlan, out: *mut f64, len: usize) -> OtlabStatus {
    guard(|| {
        let Some(p) = plan.as_ref() else {
            return fail(OtlabStatus::NullArgument, "plan is null");
        };
        if out.is_null() {
            return fail(OtlabStatus::NullArgument, "out is null");
        }
        if len != p.plan.len() {
            return fail(
                OtlabStatus::InvalidArgument,
                format!("buffer holds {len} values, plan has {} sites", p.plan.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&p.plan.weights);
        OtlabStatus::Ok
    })
}

/// Value, gradient and maximizing site of `u(x) = max_i(⟨x, y_i⟩ − ψ_i)`.
/// Any output pointer may be null.
///
/// # Safety
/// Non-null outputs must be writable; `gradient` holds two doubles.
#[no_mangle]
pub unsafe extern "C" fn otlab_plan_potential(
    plan: *const OtlabPlan,
    x: f64,
    y: f64,
    u: *mut f64,
    gradient: *mut f64,
    site: *mut usize,
) -> OtlabStatus {
    guard(|| {
        let Some(p) = plan.as_ref() else {
            return fail(OtlabStatus::NullArgument, "plan is null");
        };
        if !(x.is_finite() && y.is_finite()) {
            return fail(OtlabStatus::InvalidArgument, "point must be finite");
        }
        let v = p.plan.potential_eval(Vec2::new(x, y));
        if !u.is_null() {
            *u = v.u;
        }
        if !gradient.is_null() {
            *gradient = v.gradient.x;
            *gradient.add(1) = v.gradient.y;
        }
        if !site.is_null() {
            *site = v.cell;
        }
        OtlabStatus::Ok
    })
}

/// Classifies the tangent cones `[source_lo, source_hi]` and
/// `[target_lo, target_hi]` (degrees). `q` receives the witness
/// `(q11, q12, q22)` or three NaNs when none exists; it may be null.
///
/// # Safety
/// `verdict` must be writable; `q`, if non-null, holds three doubles.
#[no_mangle]
pub unsafe extern "C" fn otlab_classify(
    source_lo_deg: f64,
    source_hi_deg: f64,
    target_lo_deg: f64,
    target_hi_deg: f64,
    verdict: *mut OtlabConeVerdict,
    q: *mut f64,
) -> OtlabStatus {
    guard(|| {
        if verdict.is_null() {
            return fail(OtlabStatus::NullArgument, "verdict is null");
        }
        let pair = Sector::from_degrees(source_lo_deg, source_hi_deg)
            .and_then(|s| Ok((s, Sector::from_degrees(target_lo_deg, target_hi_deg)?)))
            .map_err(|e| e.to_string())
            .and_then(|(s, t)| ConePair::new(s, t).map_err(|e| e.to_string()));
        let pair = match pair {
            Ok(p) => p,
            Err(e) => return fail(OtlabStatus::InvalidArgument, e),
        };
        let c = cones::classify(&pair);
        *verdict = match c.verdict {
            cones::Verdict::HalfSpace => OtlabConeVerdict::HalfSpace,
            cones::Verdict::Acute => OtlabConeVerdict::Acute,
            cones::Verdict::RightAngle => OtlabConeVerdict::RightAngle,
            cones::Verdict::Obtuse => OtlabConeVerdict::Obtuse,
            cones::Verdict::NoHomogeneousMap => OtlabConeVerdict::NoHomogeneousMap,
        };
        if !q.is_null() {
            let v = c.witness.map_or([f64::NAN; 3], |w| [w.q.a, w.q.b, w.q.c]);
            std::slice::from_raw_parts_mut(q, 3).copy_from_slice(&v);
        }
        OtlabStatus::Ok
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otlab_exponents(n: f64, m: f64, l: f64, k: f64, out: *mut OtlabExponents) -> OtlabStatus {
    guard(|| {
        if out.is_null() {
            return fail(OtlabStatus::NullArgument, "out is null");
        }
        match cones::exponents(n, m, l, k) {
            Ok(t) => {
                *out = OtlabExponents {
                    alpha: t.alpha,
                    deg_u: t.deg_u,
                    deg_v: t.deg_v,
                    beta_u: t.beta_u,
                    beta_v: t.beta_v,
                    beta_flat: t.beta_flat,
                    beta_cone_u: t.beta_cone_u.unwrap_or(f64::NAN),
                    beta_cone_v: t.beta_cone_v.unwrap_or(f64::NAN),
                    gamma_vol: t.gamma_vol,
                    chi_exponent: t.chi_exponent,
                    kappa_star: t.kappa_star,
                };
                OtlabStatus::Ok
            }
            Err(e) => fail(OtlabStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs a scenario file and, when `out_dir` is non-null, writes its outputs
/// there. Returns [`OtlabStatus::ScenarioFailed`] when a check fails.
///
/// # Safety
/// `path` and non-null `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn otlab_run_scenario_file(path: *const c_char, out_dir: *const c_char) -> OtlabStatus {
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let out = if out_dir.is_null() {
            None
        } else {
            match path_arg(out_dir) {
                Ok(p) => Some(p),
                Err(s) => return s,
            }
        };
        let result = lab::read_scenario(path).and_then(|s| lab::run(&s, &RunOptions::default()));
        let run = match result {
            Ok(r) => r,
            Err(e @ lab::LabError::Io { .. }) => return fail(OtlabStatus::Io, e.to_string()),
            Err(e) => return fail(OtlabStatus::Config, e.to_string()),
        };
        if let Some(dir) = out {
            if let Err(e) = lab::write_run(&run, dir) {
                return fail(OtlabStatus::Io, e.to_string());
            }
        }
        if run.report.status == Status::Pass {
            OtlabStatus::Ok
        } else {
            let failed: Vec<String> = run.report.failed_checks().map(|c| c.name.clone()).collect();
            let why = run.report.error.clone().unwrap_or_else(|| failed.join(", "));
            fail(OtlabStatus::ScenarioFailed, format!("{}: {why}", run.report.scenario))
        }
    })
}
