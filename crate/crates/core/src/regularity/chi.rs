use super::{extrinsic_ball, BasePoint, RegularityError, RegularityParams};
use crate::convex2d::{Sector, Sym2, Vec2};
use crate::measures::{gauss_rule, Density, Quadrature};
use crate::sdot::TransportPlan;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Planar dimension.
const N: f64 = 2.0;

/// `2(n + l) / (1 + (n + l)/(n + k))` at `n = 2`.
pub fn chi_exponent(l: f64, k: f64) -> f64 {
    2.0 * (N + l) / (1.0 + (N + l) / (N + k))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `χ(r_{index+1})` exceeds `χ(r_index)`.
    pub index: usize,
    pub relative_increase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityTrace {
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    pub chi: Vec<f64>,
    pub exponent_used: f64,
    pub violations: Vec<Violation>,
}

impl MonotonicityTrace {
    /// `(max χ − min χ) / max χ`.
    pub fn relative_variation(&self) -> f64 {
        let hi = self.chi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.chi.iter().copied().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi
    }
}

fn check_radii(radii: &[f64]) -> Result<(), RegularityError> {
    if radii.is_empty() {
        return Err(RegularityError::InvalidInput("no radii".into()));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RegularityError::InvalidInput(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn assemble(
    radii: &[f64],
    masses: Vec<f64>,
    exponent: f64,
    params: &RegularityParams,
) -> Result<MonotonicityTrace, RegularityError> {
    if !(masses[0] > 0.0) {
        return Err(RegularityError::RadiusTooSmall(radii[0]));
    }
    let damping = |r: f64| match (params.chi_a, params.chi_eps0) {
        (Some(a), Some(e)) => (-a * r.powf(e)).exp(),
        _ => 1.0,
    };
    let chi: Vec<f64> = radii
        .iter()
        .zip(&masses)
        .map(|(&r, &m)| damping(r) * r.powf(-exponent) * m)
        .collect();
    let violations = chi
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] * (1.0 + params.slack))
        .map(|(j, w)| Violation {
            index: j,
            relative_increase: w[1] / w[0] - 1.0,
        })
        .collect();
    Ok(MonotonicityTrace {
        radii: radii.to_vec(),
        masses,
        chi,
        exponent_used: exponent,
        violations,
    })
}

/// `χ(r) = r^{−e} μ(D_r)` on a solved plan, with `e = chi_exponent(l, k)`
/// and `μ = g dx`.
pub fn chi_trace(
    plan: &TransportPlan,
    base: &BasePoint,
    g: &Density,
    l: f64,
    k: f64,
    radii: &[f64],
    params: &RegularityParams,
) -> Result<MonotonicityTrace, RegularityError> {
    check_radii(radii)?;
    let q = Quadrature::default();
    let masses = radii
        .iter()
        .map(|&r| extrinsic_ball(plan, base, r).mass(g, &q))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(radii, masses, chi_exponent(l, k), params)
}

/// `χ(r)` for the exact potential `u = ½ xᵀQx` on a sector with apex at the
/// origin. Then `ψ(x) = xᵀQx` and `D_r` is the part of the sector where
/// `xᵀQx ≤ r²`; its mass is integrated in polar coordinates by composite
/// Gauss–Legendre in angle and radius.
pub fn chi_trace_analytic(
    q: Sym2,
    sector: &Sector,
    g: &Density,
    l: f64,
    k: f64,
    radii: &[f64],
    params: &RegularityParams,
) -> Result<MonotonicityTrace, RegularityError> {
    check_radii(radii)?;
    if !q.is_positive_definite() {
        return Err(RegularityError::InvalidInput("Q must be positive definite".into()));
    }
    const PANELS: usize = 64;
    let rule = gauss_rule(16);
    let lo = sector.theta_lo();
    let width = sector.span() / PANELS as f64;
    let masses: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let mut total = 0.0;
            for p in 0..PANELS {
                for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
                    let theta = lo + width * (p as f64 + t);
                    let e = Vec2::from_angle(theta);
                    let rho_max = r / q.quad(e).sqrt();
                    let mut radial = 0.0;
                    for (&s, &ws) in rule.nodes.iter().zip(&rule.weights) {
                        let rho = rho_max * s;
                        radial += ws * g.eval(e * rho) * rho;
                    }
                    total += wt * width * radial * rho_max;
                }
            }
            total
        })
        .collect();
    assemble(radii, masses, chi_exponent(l, k), params)
}
