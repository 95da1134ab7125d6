use super::{
    cells_meeting_sublevel, centered_section_from, extension_value, v_section_proxy, BasePoint,
    RegularityError, RegularityParams,
};
use crate::convex2d::{lowner_ellipse, Ellipse, Polygon, Sym2, Vec2, TOL_GEOM};
use crate::measures::{integrate, Quadrature};
use crate::sdot::TransportPlan;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// Twice the standard error of the slope.
    pub half_width: f64,
    pub samples: usize,
}

impl Fit {
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }
}

/// Ordinary least squares of `log y` on `log x` over the samples with `x`
/// inside `window` (inclusive); all of them when `window` is `None`.
pub fn exponent_fit(xs: &[f64], ys: &[f64], window: Option<(f64, f64)>) -> Result<Fit, RegularityError> {
    if xs.len() != ys.len() {
        return Err(RegularityError::FitDomainError("xs and ys differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| window.is_none_or(|(lo, hi)| **x >= lo && **x <= hi))
        .map(|(&x, &y)| (x, y))
        .collect();
    if pts.len() < 4 {
        return Err(RegularityError::FitDomainError(format!(
            "need at least 4 samples, got {}",
            pts.len()
        )));
    }
    if let Some((x, y)) = pts.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(RegularityError::FitDomainError(format!("non-positive sample ({x}, {y})")));
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(RegularityError::FitDomainError("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(Fit {
        slope,
        intercept,
        half_width: 2.0 * se,
        samples: pts.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Round,
    NonRound,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Round => "ROUND",
            Verdict::NonRound => "NON_ROUND",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// One height of a section profile.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionSample {
    pub h: f64,
    /// Centered section of the extension (empty when centering failed).
    pub polygon: Polygon,
    pub ellipse: Option<Ellipse>,
    pub axis_major: f64,
    pub axis_minor: f64,
    pub eccentricity: f64,
    /// Angle of the major axis in `[0, π)`.
    pub major_angle: f64,
    /// Source mass of the section within `Ω`.
    pub mass: f64,
    /// Cells of the plan meeting the section within `Ω`.
    pub cells: usize,
    pub slope: Vec2,
    pub trusted: bool,
    /// Why the sample is untrusted, if it is.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectionProfile {
    pub x0: Vec2,
    pub samples: Vec<SectionSample>,
    pub predicted_beta: f64,
    pub fit_major: Fit,
    pub fit_minor: Fit,
    pub verdict: Verdict,
    /// Consecutive pairs where the smaller section is not inside the larger
    /// one inflated by `1 + TOL_GEOM` about `x0`; reported, not asserted.
    pub nesting_violations: usize,
}

impl SectionProfile {
    pub fn heights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.h).collect()
    }

    pub fn trusted(&self) -> impl Iterator<Item = &SectionSample> {
        self.samples.iter().filter(|s| s.trusted)
    }

    pub fn max_trusted_eccentricity(&self) -> f64 {
        self.trusted().map(|s| s.eccentricity).fold(0.0, f64::max)
    }

    /// Eccentricity at the smallest and the largest trusted height.
    pub fn eccentricity_ends(&self) -> (f64, f64) {
        let t: Vec<&SectionSample> = self.trusted().collect();
        (t[0].eccentricity, t[t.len() - 1].eccentricity)
    }
}

fn check_heights(heights: &[f64]) -> Result<(), RegularityError> {
    if heights.is_empty() || heights[0] <= 0.0 || heights.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RegularityError::InvalidInput(
            "heights must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Angle of a direction folded into `[0, π)`.
fn axis_angle(d: Vec2) -> f64 {
    let a = d.angle();
    if a < 0.0 {
        a + std::f64::consts::PI
    } else if a >= std::f64::consts::PI {
        a - std::f64::consts::PI
    } else {
        a
    }
}

/// Centered sections at `x0` for each height, their Löwner ellipses and
/// least-squares axis slopes over the trusted window.
///
/// A height is trusted when centering succeeds, the section meets at least
/// `min_cells` cells and `h ≤ h_max_fraction · osc(u)`. The verdict is
/// ROUND when every trusted eccentricity is at most `ecc_cap` and both
/// slopes are within `slope_tol` of `predicted_beta`; NON_ROUND when the
/// eccentricity at the smallest trusted height is at least twice that at
/// the largest; INCONCLUSIVE otherwise.
pub fn roundness_profile(
    plan: &TransportPlan,
    x0: Vec2,
    heights: &[f64],
    predicted_beta: f64,
    params: &RegularityParams,
) -> Result<SectionProfile, RegularityError> {
    check_heights(heights)?;
    let start = BasePoint::at(plan, x0)?;
    let h_max = params.h_max_fraction * plan.oscillation();
    let q = Quadrature::default();
    let samples: Vec<SectionSample> = heights
        .par_iter()
        .map(|&h| -> Result<SectionSample, RegularityError> {
            let mut s = SectionSample {
                h,
                polygon: Polygon::empty(),
                ellipse: None,
                axis_major: f64::NAN,
                axis_minor: f64::NAN,
                eccentricity: f64::NAN,
                major_angle: f64::NAN,
                mass: f64::NAN,
                cells: 0,
                slope: start.p0,
                trusted: false,
                note: None,
            };
            let cs = match centered_section_from(plan, &start, h, params) {
                Ok(cs) => cs,
                Err(e @ RegularityError::CenteringFailure { .. }) => {
                    s.note = Some(e.to_string());
                    return Ok(s);
                }
                Err(e) => return Err(e),
            };
            let ell = lowner_ellipse(&cs.polygon)?;
            let (a, b) = ell.axes();
            s.axis_major = a;
            s.axis_minor = b;
            s.eccentricity = a / b;
            s.major_angle = axis_angle(ell.major_direction());
            s.ellipse = Some(ell);
            s.mass = integrate(&plan.source_density, &cs.in_domain(plan), &q)?;
            s.cells = cells_meeting_sublevel(plan, cs.slope, h + start.u0 - cs.slope.dot(x0));
            s.slope = cs.slope;
            s.polygon = cs.polygon;
            if s.cells < params.min_cells {
                s.note = Some(format!("section meets {} cells", s.cells));
            } else if h > h_max {
                s.note = Some(format!("height above {h_max:e}"));
            } else {
                s.trusted = true;
            }
            Ok(s)
        })
        .collect::<Result<_, _>>()?;

    let trusted: Vec<&SectionSample> = samples.iter().filter(|s| s.trusted).collect();
    if trusted.len() < 4 {
        return Err(RegularityError::WindowTooNarrow {
            trusted: trusted.len(),
            required: 4,
        });
    }
    let hs: Vec<f64> = trusted.iter().map(|s| s.h).collect();
    let fit_major = exponent_fit(&hs, &trusted.iter().map(|s| s.axis_major).collect::<Vec<_>>(), None)?;
    let fit_minor = exponent_fit(&hs, &trusted.iter().map(|s| s.axis_minor).collect::<Vec<_>>(), None)?;
    let ecc_max = trusted.iter().map(|s| s.eccentricity).fold(0.0, f64::max);
    let ecc_first = trusted[0].eccentricity;
    let ecc_last = trusted[trusted.len() - 1].eccentricity;
    let verdict = if ecc_max <= params.ecc_cap
        && fit_major.within(predicted_beta, params.slope_tol)
        && fit_minor.within(predicted_beta, params.slope_tol)
    {
        Verdict::Round
    } else if ecc_first >= 2.0 * ecc_last {
        Verdict::NonRound
    } else {
        Verdict::Inconclusive
    };
    let nesting_violations = samples
        .windows(2)
        .filter(|w| !w[0].polygon.is_empty() && !w[1].polygon.is_empty())
        .filter(|w| {
            let outer = w[1].polygon.scaled_about(x0, 1.0 + TOL_GEOM);
            w[0].polygon.vertices().iter().any(|v| !outer.contains(*v))
        })
        .count();
    Ok(SectionProfile {
        x0,
        samples,
        predicted_beta,
        fit_major,
        fit_minor,
        verdict,
        nesting_violations,
    })
}

/// Gradient-image hulls over a range of heights with their axis slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyProfile {
    pub heights: Vec<f64>,
    pub polygons: Vec<Polygon>,
    pub axis_major: Vec<f64>,
    pub axis_minor: Vec<f64>,
    pub trusted: Vec<bool>,
    pub fit_major: Fit,
    pub fit_minor: Fit,
}

/// `v_section_proxy` at each height; a height is trusted when the hull
/// spans at least `min_cells` sites and `h ≤ h_max_fraction · osc(u)`.
pub fn v_proxy_profile(
    plan: &TransportPlan,
    base: &BasePoint,
    heights: &[f64],
    params: &RegularityParams,
) -> Result<ProxyProfile, RegularityError> {
    check_heights(heights)?;
    let h_max = params.h_max_fraction * plan.oscillation();
    let rows: Vec<(Polygon, f64, f64, bool)> = heights
        .par_iter()
        .map(|&h| -> Result<_, RegularityError> {
            let cells = super::section_cell_count(plan, base, h);
            let hull = v_section_proxy(plan, base, h);
            if hull.len() < 3 {
                return Ok((hull, f64::NAN, f64::NAN, false));
            }
            let (a, b) = lowner_ellipse(&hull)?.axes();
            Ok((hull, a, b, cells >= params.min_cells && h <= h_max))
        })
        .collect::<Result<_, _>>()?;
    let pick = |f: fn(&(Polygon, f64, f64, bool)) -> f64| -> (Vec<f64>, Vec<f64>) {
        rows.iter()
            .zip(heights)
            .filter(|(r, _)| r.3)
            .map(|(r, &h)| (h, f(r)))
            .unzip()
    };
    let (hs, major) = pick(|r| r.1);
    let (_, minor) = pick(|r| r.2);
    if hs.len() < 4 {
        return Err(RegularityError::WindowTooNarrow {
            trusted: hs.len(),
            required: 4,
        });
    }
    let fit_major = exponent_fit(&hs, &major, None)?;
    let fit_minor = exponent_fit(&hs, &minor, None)?;
    Ok(ProxyProfile {
        heights: heights.to_vec(),
        polygons: rows.iter().map(|r| r.0.clone()).collect(),
        axis_major: rows.iter().map(|r| r.1).collect(),
        axis_minor: rows.iter().map(|r| r.2).collect(),
        trusted: rows.iter().map(|r| r.3).collect(),
        fit_major,
        fit_minor,
    })
}

/// Normalized potential `ũ(x̃) = (ū − ℓ)(x0 + A⁻¹x̃) / h` where `A` is the
/// square root of the shape of the Löwner ellipse of `S^c_h(u, x0)` and
/// `ℓ(x) = ū(x0) + ⟨p, x − x0⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct Blowup {
    pub x0: Vec2,
    pub h: f64,
    pub slope: Vec2,
    pub u0: f64,
    pub normalization: Sym2,
    pub normalization_inv: Sym2,
    pub ellipse: Ellipse,
    pieces: Vec<(Vec2, f64)>,
}

impl Blowup {
    pub fn eval(&self, xt: Vec2) -> f64 {
        let x = self.x0 + self.normalization_inv.mul_vec(xt);
        let u = self
            .pieces
            .iter()
            .map(|(y, psi)| x.dot(*y) - psi)
            .fold(f64::NEG_INFINITY, f64::max);
        (u - self.u0 - self.slope.dot(x - self.x0)) / self.h
    }

    /// `max |ũ(t x̃) − t^degree ũ(x̃)|` over the given points.
    pub fn homogeneity_defect(&self, t: f64, degree: f64, points: &[Vec2]) -> f64 {
        points
            .iter()
            .map(|&x| (self.eval(x * t) - t.powf(degree) * self.eval(x)).abs())
            .fold(0.0, f64::max)
    }

    /// `max |ũ − ũ_other|` over the given points.
    pub fn sup_distance(&self, other: &Blowup, points: &[Vec2]) -> f64 {
        points
            .iter()
            .map(|&x| (self.eval(x) - other.eval(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic points of the closed unit disk: the center plus `rings`
/// concentric rings of `6·j` points each.
pub fn unit_disk_samples(rings: usize) -> Vec<Vec2> {
    let mut pts = vec![Vec2::ZERO];
    for j in 1..=rings {
        let r = j as f64 / rings as f64;
        let m = 6 * j;
        for i in 0..m {
            let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            pts.push(Vec2::from_angle(t) * r);
        }
    }
    pts
}

pub fn blowup_rescale(
    plan: &TransportPlan,
    x0: Vec2,
    h: f64,
    params: &RegularityParams,
) -> Result<Blowup, RegularityError> {
    let start = BasePoint::at(plan, x0)?;
    let cs = centered_section_from(plan, &start, h, params)?;
    let ellipse = lowner_ellipse(&cs.polygon)?;
    let a = ellipse.shape.sqrt();
    let a_inv = a.inverse().ok_or(crate::convex2d::GeomError::DegenerateRegion(a.det()))?;
    let pieces = plan
        .sites()
        .iter()
        .zip(&plan.weights)
        .zip(&plan.diagram.cells)
        .filter(|(_, c)| !c.is_empty())
        .map(|((y, psi), _)| (*y, *psi))
        .collect();
    Ok(Blowup {
        x0,
        h,
        slope: cs.slope,
        u0: extension_value(plan, x0),
        normalization: a,
        normalization_inv: a_inv,
        ellipse,
        pieces,
    })
}
