//! Diagnostics on the piecewise-linear Brenier potential of a solved plan:
//! sections, centered sections, extrinsic balls, the monotonicity functional
//! χ, section-shape profiles, blow-ups and obliqueness.

mod chi;
mod profile;

pub use chi::{chi_exponent, chi_trace, chi_trace_analytic, MonotonicityTrace, Violation};
pub use profile::{
    blowup_rescale, exponent_fit, roundness_profile, unit_disk_samples, v_proxy_profile, Blowup, Fit,
    ProxyProfile, SectionProfile, SectionSample, Verdict,
};

use crate::convex2d::{
    convex_hull, tangent_cone, vertex_index, GeomError, HalfPlane, Polygon, Vec2, TOL_GEOM,
};
use crate::measures::MeasureError;
use crate::sdot::TransportPlan;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegularityError {
    #[error("extrinsic ball at the smallest radius {0:e} is empty")]
    RadiusTooSmall(f64),
    #[error("centering did not converge after {iterations} iterations (offset {residual:e} of the diameter, slope ({}, {}))", slope.x, slope.y)]
    CenteringFailure {
        iterations: usize,
        residual: f64,
        slope: Vec2,
    },
    #[error("only {trusted} heights lie in the trusted window, need {required}")]
    WindowTooNarrow { trusted: usize, required: usize },
    #[error("exponent fit: {0}")]
    FitDomainError(String),
    #[error("({x}, {y}) is not a vertex of the polygon")]
    NotAVertex { x: f64, y: f64 },
    #[error("invalid base point: {0}")]
    InvalidBasePoint(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Tunables shared by the diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityParams {
    /// Allowed absolute deviation of a fitted section slope.
    pub slope_tol: f64,
    /// Largest eccentricity compatible with a ROUND verdict.
    pub ecc_cap: f64,
    /// Relative increase of χ tolerated between consecutive radii.
    pub slack: f64,
    /// Centroid offset allowed for a centered section, relative to its diameter.
    pub center_tol: f64,
    pub max_center_iter: usize,
    /// Damping λ of the slope update in the centering iteration.
    pub centering_damping: f64,
    /// A section or ball is trusted once it meets this many cells.
    pub min_cells: usize,
    /// Upper end of the trusted window as a fraction of `osc(u)`.
    pub h_max_fraction: f64,
    /// Side length of the extension box relative to the source bounding box.
    pub box_factor: f64,
    /// Optional `A` of the weight `exp(−A r^ε₀)` applied to χ.
    pub chi_a: Option<f64>,
    /// Optional `ε₀` of the same weight.
    pub chi_eps0: Option<f64>,
}

impl Default for RegularityParams {
    fn default() -> Self {
        RegularityParams {
            slope_tol: 0.07,
            ecc_cap: 3.0,
            slack: 0.05,
            center_tol: 1e-3,
            max_center_iter: 60,
            centering_damping: 0.7,
            min_cells: 30,
            h_max_fraction: 0.1,
            box_factor: 3.0,
            chi_a: None,
            chi_eps0: None,
        }
    }
}

/// A point of `closure(Ω)` with a supporting slope:
/// `u(x) ≥ u0 + ⟨p0, x − x0⟩` on `Ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub x0: Vec2,
    pub u0: f64,
    pub p0: Vec2,
}

impl BasePoint {
    /// Base point with the default slope: the pinned site if its cell
    /// touches `x0`, otherwise the mass-weighted mean gradient over the cells
    /// touching `x0`.
    pub fn at(plan: &TransportPlan, x0: Vec2) -> Result<Self, RegularityError> {
        let tol = TOL_GEOM * plan.source.diameter().max(1.0);
        if plan.source.distance_to(x0) > tol {
            return Err(RegularityError::InvalidBasePoint(format!(
                "({}, {}) lies outside the source domain",
                x0.x, x0.y
            )));
        }
        let touching: Vec<usize> = plan
            .diagram
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty() && c.polygon.distance_to(x0) <= tol)
            .map(|(i, _)| i)
            .collect();
        let u0 = extension_value(plan, x0);
        let pts = plan.sites();
        let p0 = match plan.cloud.pinned {
            Some(j) if touching.contains(&j) => pts[j],
            _ if touching.is_empty() => plan.potential_eval(x0).gradient,
            _ => {
                let m: f64 = touching.iter().map(|&i| plan.cloud.masses[i]).sum();
                touching
                    .iter()
                    .fold(Vec2::ZERO, |s, &i| s + pts[i] * plan.cloud.masses[i])
                    / m
            }
        };
        Ok(BasePoint { x0, u0, p0 })
    }

    /// Base point with a caller-chosen slope.
    pub fn with_slope(plan: &TransportPlan, x0: Vec2, p0: Vec2) -> Self {
        BasePoint {
            x0,
            u0: extension_value(plan, x0),
            p0,
        }
    }

    /// `u(x) − u0 − ⟨p0, x − x0⟩`.
    pub fn excess(&self, plan: &TransportPlan, x: Vec2) -> f64 {
        extension_value(plan, x) - self.u0 - self.p0.dot(x - self.x0)
    }

    /// Smallest excess over `samples` uniform points of `Ω` and all cell
    /// vertices; fails when it is negative beyond round-off.
    pub fn validate_subgradient(
        &self,
        plan: &TransportPlan,
        samples: usize,
        seed: u64,
    ) -> Result<f64, RegularityError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = plan.source.bbox();
        let mut worst = f64::INFINITY;
        let mut taken = 0;
        while taken < samples {
            let x = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
            if plan.source.contains(x) {
                worst = worst.min(self.excess(plan, x));
                taken += 1;
            }
        }
        for c in &plan.diagram.cells {
            for &v in c.polygon.vertices() {
                worst = worst.min(self.excess(plan, v));
            }
        }
        let scale = plan.oscillation().max(f64::MIN_POSITIVE);
        if worst < -1e-9 * scale {
            return Err(RegularityError::InvalidBasePoint(format!(
                "slope ({}, {}) is not a subgradient: excess {worst:e}",
                self.p0.x, self.p0.y
            )));
        }
        Ok(worst)
    }
}

/// Minimal convex extension `ū(x) = max_i(⟨x, y_i⟩ − ψ_i)` over sites with
/// non-empty cells.
pub fn extension_value(plan: &TransportPlan, x: Vec2) -> f64 {
    plan.sites()
        .iter()
        .zip(&plan.weights)
        .zip(&plan.diagram.cells)
        .filter(|(_, c)| !c.is_empty())
        .map(|((y, psi), _)| x.dot(*y) - psi)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `start ∩ {x : ⟨x, y_i − p⟩ − ψ_i ≤ level}` over all sites with non-empty
/// cells. Returns the polygon and whether any constraint cut it.
fn clip_sublevel(plan: &TransportPlan, start: Polygon, p: Vec2, level: f64) -> (Polygon, bool) {
    let pts = plan.sites();
    let mut order: Vec<usize> = (0..pts.len())
        .filter(|&i| !plan.diagram.cells[i].is_empty())
        .collect();
    // Gradients near p bound the set most tightly; clip with them first.
    order.sort_by(|&a, &b| (pts[a] - p).norm2().total_cmp(&(pts[b] - p).norm2()).then(a.cmp(&b)));
    let mut poly = start;
    let mut cut = false;
    for i in order {
        if poly.is_empty() {
            break;
        }
        let normal = pts[i] - p;
        if normal.norm2() == 0.0 {
            continue;
        }
        let offset = level + plan.weights[i];
        let (lo, hi) = poly.bbox();
        let corner = Vec2::new(
            if normal.x > 0.0 { hi.x } else { lo.x },
            if normal.y > 0.0 { hi.y } else { lo.y },
        );
        if normal.dot(corner) <= offset {
            continue;
        }
        let clipped = poly.clip(&HalfPlane { normal, offset });
        if clipped != poly {
            cut = true;
        }
        poly = clipped;
    }
    (poly, cut)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub polygon: Polygon,
    /// No constraint was active: the section is all of `Ω`.
    pub saturated: bool,
}

/// `S_h(u, x0) = {x ∈ Ω : u(x) − u0 − ⟨p0, x − x0⟩ ≤ h}`, exact.
pub fn section(plan: &TransportPlan, base: &BasePoint, h: f64) -> Result<Section, RegularityError> {
    if !(h > 0.0) {
        return Err(RegularityError::InvalidInput(format!("height must be positive, got {h}")));
    }
    let level = h + base.u0 - base.p0.dot(base.x0);
    let (polygon, cut) = clip_sublevel(plan, plan.source.clone(), base.p0, level);
    Ok(Section {
        saturated: !cut,
        polygon,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenteredSection {
    /// The section of the extension, inside the extension box.
    pub polygon: Polygon,
    pub slope: Vec2,
    pub iterations: usize,
    /// `|centroid − x0| / diam` at the returned slope.
    pub residual: f64,
}

impl CenteredSection {
    pub fn in_domain(&self, plan: &TransportPlan) -> Polygon {
        self.polygon.intersect(&plan.source)
    }
}

fn extension_box(plan: &TransportPlan, factor: f64) -> Polygon {
    let (lo, hi) = plan.source.bbox();
    let c = (lo + hi) / 2.0;
    let half = (hi - lo) * (factor / 2.0);
    Polygon::rectangle(c.x - half.x, c.y - half.y, c.x + half.x, c.y + half.y)
        .expect("source bounding box has positive size")
}

fn touches_box(p: &Polygon, bx: &Polygon) -> bool {
    let (lo, hi) = bx.bbox();
    let tol = TOL_GEOM * (hi - lo).norm();
    p.vertices().iter().any(|v| {
        (v.x - lo.x).abs() <= tol || (v.x - hi.x).abs() <= tol || (v.y - lo.y).abs() <= tol || (v.y - hi.y).abs() <= tol
    })
}

/// `S^c_h(u, x0) = {ū(x) − ū(x0) − ⟨p, x − x0⟩ ≤ h}` with `p` chosen so
/// the section has its center of mass at `x0`.
///
/// The slope is updated by `p ← p − λ (h/2) M⁻¹ (centroid − x0)`, where `M`
/// is the covariance of the current section; for a quadratic potential
/// `(h/2) M⁻¹` is its Hessian and the step is exact.
pub fn centered_section(
    plan: &TransportPlan,
    x0: Vec2,
    h: f64,
    params: &RegularityParams,
) -> Result<CenteredSection, RegularityError> {
    if !(h > 0.0) {
        return Err(RegularityError::InvalidInput(format!("height must be positive, got {h}")));
    }
    let start = BasePoint::at(plan, x0)?;
    centered_section_from(plan, &start, h, params)
}

pub(crate) fn centered_section_from(
    plan: &TransportPlan,
    start: &BasePoint,
    h: f64,
    params: &RegularityParams,
) -> Result<CenteredSection, RegularityError> {
    let x0 = start.x0;
    let bx = extension_box(plan, params.box_factor);
    let mut p = start.p0;
    let mut last_residual = f64::INFINITY;
    for it in 0..=params.max_center_iter {
        let level = h + start.u0 - p.dot(x0);
        let (poly, _) = clip_sublevel(plan, bx.clone(), p, level);
        let m = poly.moments();
        if !(m.area > 0.0) {
            break;
        }
        let diam = poly.diameter();
        let offset = m.centroid - x0;
        last_residual = offset.norm() / diam;
        if last_residual <= params.center_tol {
            if touches_box(&poly, &bx) {
                break;
            }
            return Ok(CenteredSection {
                polygon: poly,
                slope: p,
                iterations: it,
                residual: last_residual,
            });
        }
        let inv = match m.second.inverse() {
            Some(inv) => inv,
            None => break,
        };
        p = p - inv.mul_vec(offset) * (params.centering_damping * h / 2.0);
    }
    Err(RegularityError::CenteringFailure {
        iterations: params.max_center_iter,
        residual: last_residual,
        slope: p,
    })
}

/// `D_r = {x ∈ Ω : ⟨x − x0, ∇u(x) − p0⟩ ≤ r²}` as one convex piece per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrinsicBall {
    pub radius: f64,
    /// `pieces[i] = cell_i ∩ {⟨x − x0, y_i − p0⟩ ≤ r²}`, possibly empty.
    pub pieces: Vec<Polygon>,
}

impl ExtrinsicBall {
    pub fn area(&self) -> f64 {
        self.pieces.iter().map(|p| p.area()).sum()
    }

    pub fn cell_count(&self) -> usize {
        self.pieces.iter().filter(|p| !p.is_empty()).count()
    }

    pub fn mass(
        &self,
        g: &crate::measures::Density,
        q: &crate::measures::Quadrature,
    ) -> Result<f64, RegularityError> {
        let parts: Vec<f64> = self
            .pieces
            .par_iter()
            .filter(|p| !p.is_empty())
            .map(|p| crate::measures::integrate(g, p, q))
            .collect::<Result<_, _>>()?;
        Ok(parts.iter().sum())
    }
}

pub fn extrinsic_ball(plan: &TransportPlan, base: &BasePoint, r: f64) -> ExtrinsicBall {
    let r2 = r * r;
    let pieces = plan
        .diagram
        .cells
        .par_iter()
        .zip(plan.sites().par_iter())
        .map(|(c, &y)| {
            if c.is_empty() {
                return Polygon::empty();
            }
            let normal = y - base.p0;
            let offset = r2 + normal.dot(base.x0);
            if c.polygon.vertices().iter().all(|v| normal.dot(*v) <= offset) {
                return c.polygon.clone();
            }
            c.polygon.clip(&HalfPlane { normal, offset })
        })
        .collect();
    ExtrinsicBall { radius: r, pieces }
}

/// Areas by which the inclusions `½S_{r²} ⊆ D_r ⊆ S_{r²}` fail, where `½S`
/// is the homothety about `x0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichDefect {
    pub radius: f64,
    /// `area(½S_{r²} ∖ D_r)`.
    pub inner: f64,
    /// `area(D_r ∖ S_{r²})`.
    pub outer: f64,
    pub section_area: f64,
}

impl SandwichDefect {
    pub fn relative(&self) -> f64 {
        self.inner.max(self.outer) / self.section_area
    }
}

pub fn sandwich_defect(
    plan: &TransportPlan,
    base: &BasePoint,
    r: f64,
) -> Result<SandwichDefect, RegularityError> {
    let s = section(plan, base, r * r)?.polygon;
    let half = s.scaled_about(base.x0, 0.5);
    let ball = extrinsic_ball(plan, base, r);
    // Collected before summing so the result does not depend on how the
    // work was split across threads.
    let parts: Vec<(f64, f64)> = ball
        .pieces
        .par_iter()
        .filter(|p| !p.is_empty())
        .map(|p| (p.intersect(&half).area(), p.intersect(&s).area()))
        .collect();
    let (in_half, in_s) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(SandwichDefect {
        radius: r,
        inner: (half.area() - in_half).max(0.0),
        outer: (ball.area() - in_s).max(0.0),
        section_area: s.area(),
    })
}

/// Number of non-empty cells meeting `{x : ⟨x, y_i − p⟩ − ψ_i ≤ level}`.
fn cells_meeting_sublevel(plan: &TransportPlan, p: Vec2, level: f64) -> usize {
    plan.diagram
        .cells
        .iter()
        .zip(plan.sites())
        .zip(&plan.weights)
        .filter(|((c, y), psi)| {
            !c.is_empty()
                && c.polygon
                    .vertices()
                    .iter()
                    .any(|v| v.dot(**y - p) - **psi <= level)
        })
        .count()
}

/// Number of cells meeting `S_h(u, x0)`.
pub fn section_cell_count(plan: &TransportPlan, base: &BasePoint, h: f64) -> usize {
    cells_meeting_sublevel(plan, base.p0, h + base.u0 - base.p0.dot(base.x0))
}

/// Gradient-image hull: convex hull of the sites whose cells have their
/// centroid in `S_h(u, x0)`. Counting every cell that merely touches the
/// section inflates the hull by a cell diameter at all heights.
pub fn v_section_proxy(plan: &TransportPlan, base: &BasePoint, h: f64) -> Polygon {
    let level = h + base.u0 - base.p0.dot(base.x0);
    let pts: Vec<Vec2> = plan
        .diagram
        .cells
        .iter()
        .zip(plan.sites())
        .zip(&plan.weights)
        .filter_map(|((c, y), psi)| {
            let (_, centroid) = c.polygon.area_centroid().ok()?;
            (centroid.dot(*y - base.p0) - psi <= level).then_some(*y)
        })
        .collect();
    convex_hull(&pts)
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|j| lo * (ratio * j as f64).exp()).collect()
}

/// Smallest `t` in `[lo, hi]` (to a relative 1e-3) with `count(t) ≥ need`,
/// assuming `count` is non-decreasing.
fn bisect_threshold(mut lo: f64, hi: f64, need: usize, count: impl Fn(f64) -> usize) -> Option<f64> {
    if count(hi) < need {
        return None;
    }
    if count(lo) >= need {
        return Some(lo);
    }
    let mut top = hi;
    while top / lo > 1.001 {
        let mid = (lo * top).sqrt();
        if count(mid) >= need {
            top = mid;
        } else {
            lo = mid;
        }
    }
    Some(top)
}

/// `count` geometric heights spanning the trusted window: from the smallest
/// `h` whose section meets `min_cells` cells to `h_max_fraction · osc(u)`.
pub fn trusted_heights(
    plan: &TransportPlan,
    base: &BasePoint,
    count: usize,
    params: &RegularityParams,
) -> Result<Vec<f64>, RegularityError> {
    let hi = params.h_max_fraction * plan.oscillation();
    let lo = bisect_threshold(hi * 1e-9, hi, params.min_cells, |h| section_cell_count(plan, base, h))
        .filter(|&lo| lo < hi)
        .ok_or(RegularityError::WindowTooNarrow {
            trusted: 0,
            required: count,
        })?;
    Ok(geometric(lo, hi, count))
}

/// `count` geometric radii from the smallest `r` whose extrinsic ball meets
/// `min_cells` cells to `sqrt(h_max_fraction · osc(u))`.
pub fn trusted_radii(
    plan: &TransportPlan,
    base: &BasePoint,
    count: usize,
    params: &RegularityParams,
) -> Result<Vec<f64>, RegularityError> {
    let hi = (params.h_max_fraction * plan.oscillation()).sqrt();
    let ball_cells = |r: f64| {
        let r2 = r * r;
        plan.diagram
            .cells
            .iter()
            .zip(plan.sites())
            .filter(|(c, y)| {
                !c.is_empty()
                    && c.polygon
                        .vertices()
                        .iter()
                        .any(|v| (*v - base.x0).dot(**y - base.p0) <= r2)
            })
            .count()
    };
    let lo = bisect_threshold(hi * 1e-5, hi, params.min_cells, ball_cells)
        .filter(|&lo| lo < hi)
        .ok_or(RegularityError::WindowTooNarrow {
            trusted: 0,
            required: count,
        })?;
    Ok(geometric(lo, hi, count))
}

/// Cosine of the angle between the inner bisector normals of the tangent
/// cones of `source` at `corner_x0` and of `target` at `corner_y0`.
pub fn obliqueness_check(
    source: &Polygon,
    target: &Polygon,
    corner_x0: Vec2,
    corner_y0: Vec2,
) -> Result<f64, RegularityError> {
    let cone = |p: &Polygon, x: Vec2| {
        let tol = TOL_GEOM * p.diameter().max(1.0);
        let i = vertex_index(p, x, tol).ok_or(RegularityError::NotAVertex { x: x.x, y: x.y })?;
        Ok::<_, RegularityError>(tangent_cone(p, i)?)
    };
    let l = cone(source, corner_x0)?.bisector();
    let lp = cone(target, corner_y0)?.bisector();
    Ok(l.dot(lp) / (l.norm() * lp.norm()))
}
