//! Homogeneous planar transport between cones: classification of sector
//! pairs, quadratic solutions, the radial ODE profile and exponent tables.

use crate::convex2d::{GeomError, Sector, Sym2, Vec2, ANGLE_TOL};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConesError {
    #[error("invalid cone pair: {0}")]
    InvalidPair(String),
    #[error("no homogeneous quadratic solution: {0}")]
    Unsolvable(String),
    #[error("this pair admits a one-parameter family; a parameter λ > 0 is required")]
    MissingParameter,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid exponent arguments: {0}")]
    InvalidExponents(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Source and target tangent cones, each of span in `(0, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConePair {
    pub source: Sector,
    pub target: Sector,
}

impl ConePair {
    pub fn new(source: Sector, target: Sector) -> Result<Self, ConesError> {
        for (name, s) in [("source", &source), ("target", &target)] {
            if !(s.span() > ANGLE_TOL && s.span() <= std::f64::consts::PI + ANGLE_TOL) {
                return Err(ConesError::InvalidPair(format!(
                    "{name} span {} is outside (0, π]",
                    s.span()
                )));
            }
        }
        Ok(ConePair { source, target })
    }

    /// `(A·C, A^{−t}·C′)` for an orientation-preserving `A`.
    pub fn transformed(&self, a: [[f64; 2]; 2]) -> Result<Self, ConesError> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv_t = [[a[1][1] / det, -a[1][0] / det], [-a[0][1] / det, a[0][0] / det]];
        ConePair::new(self.source.mapped(a)?, self.target.mapped(inv_t)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    HalfSpace,
    Acute,
    RightAngle,
    Obtuse,
    NoHomogeneousMap,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::HalfSpace => "HalfSpace",
            Verdict::Acute => "Acute",
            Verdict::RightAngle => "RightAngle",
            Verdict::Obtuse => "Obtuse",
            Verdict::NoHomogeneousMap => "NoHomogeneousMap",
        })
    }
}

impl Verdict {
    pub fn family_dimension(self) -> usize {
        match self {
            Verdict::HalfSpace | Verdict::RightAngle => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub family_dimension: usize,
    /// A quadratic solution (at `λ = 1` for families).
    pub witness: Option<QuadraticSolution>,
}

/// `u(x) = ½⟨Qx, x⟩` with `det Q = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSolution {
    pub q: Sym2,
}

impl QuadraticSolution {
    pub fn gradient(&self, x: Vec2) -> Vec2 {
        self.q.mul_vec(x)
    }

    pub fn value(&self, x: Vec2) -> f64 {
        0.5 * self.q.quad(x)
    }

    /// The Legendre dual `v(y) = ½⟨Q⁻¹y, y⟩`.
    pub fn dual(&self) -> QuadraticSolution {
        QuadraticSolution {
            q: self.q.inverse().expect("det Q = 1"),
        }
    }
}

/// Four-case classification of a sector pair, tested in order.
pub fn classify(pair: &ConePair) -> Classification {
    let verdict = classify_verdict(pair);
    let witness = match verdict {
        Verdict::NoHomogeneousMap => None,
        v => {
            let lambda = (v.family_dimension() == 1).then_some(1.0);
            solve_quadratic(pair, lambda).ok()
        }
    };
    Classification {
        verdict,
        family_dimension: verdict.family_dimension(),
        witness,
    }
}

fn classify_verdict(pair: &ConePair) -> Verdict {
    let (c, cp) = (&pair.source, &pair.target);
    if c.is_half_plane() && cp.is_half_plane() {
        // Inner normals of half-planes are their bisectors.
        return if c.bisector().dot(cp.bisector()) > 0.0 {
            Verdict::HalfSpace
        } else {
            Verdict::NoHomogeneousMap
        };
    }
    if !(c.is_strict() && cp.is_strict()) {
        return Verdict::NoHomogeneousMap;
    }
    let dual = c.dual_cone().expect("strict cones are dualizable");
    if cp.strictly_inside(&dual) {
        Verdict::Acute
    } else if cp.approx_eq(&dual) {
        Verdict::RightAngle
    } else if dual.strictly_inside(cp) {
        Verdict::Obtuse
    } else {
        Verdict::NoHomogeneousMap
    }
}

/// The quadratic `u = ½⟨Qx, x⟩` whose gradient maps the source cone onto the
/// target cone, boundary ray to boundary ray.
///
/// Strict cones with rays `e₁, e₂` and `f₁, f₂`: `Q e₁ = a f₁`, `Q e₂ = b f₂`,
/// symmetry forces `a⟨f₁, e₂⟩ = b⟨e₁, f₂⟩` and `det Q = 1` fixes the scale.
/// When both inner products vanish (the right-angle case) the ratio is free
/// and `λ` sets it. Half-planes with boundary directions `t, t′` and normal
/// `n = t^⊥` use `Q t = λ t′`, `Q n = λ⟨n, t′⟩ t + c n`, with `c` from
/// `det Q = 1`.
pub fn solve_quadratic(pair: &ConePair, lambda: Option<f64>) -> Result<QuadraticSolution, ConesError> {
    let verdict = classify_verdict(pair);
    if verdict == Verdict::NoHomogeneousMap {
        return Err(ConesError::Unsolvable(
            "the pair is in none of the four homogeneous cases".into(),
        ));
    }
    let lambda = match (verdict.family_dimension(), lambda) {
        (1, None) => return Err(ConesError::MissingParameter),
        (1, Some(l)) if !(l > 0.0 && l.is_finite()) => {
            return Err(ConesError::InvalidParameter(format!("λ must be positive, got {l}")))
        }
        (_, l) => l.unwrap_or(1.0),
    };
    let q = if verdict == Verdict::HalfSpace {
        half_plane_quadratic(pair, lambda)
    } else {
        strict_quadratic(pair, verdict, lambda)?
    };
    if !q.is_positive_definite() {
        return Err(ConesError::Unsolvable("resulting Q is not positive definite".into()));
    }
    Ok(QuadraticSolution { q })
}

fn half_plane_quadratic(pair: &ConePair, lambda: f64) -> Sym2 {
    let t = pair.source.lo_ray();
    let n = t.perp();
    let tp = pair.target.lo_ray();
    let (tt, nt) = (t.dot(tp), n.dot(tp));
    let a = lambda;
    let c = (1.0 + a * a * nt * nt) / (a * tt);
    // Q in the orthonormal frame (t, n), rotated back.
    let (q_tt, q_tn, q_nn) = (a * tt, a * nt, c);
    Sym2::new(
        q_tt * t.x * t.x + 2.0 * q_tn * t.x * n.x + q_nn * n.x * n.x,
        q_tt * t.x * t.y + q_tn * (t.x * n.y + t.y * n.x) + q_nn * n.x * n.y,
        q_tt * t.y * t.y + 2.0 * q_tn * t.y * n.y + q_nn * n.y * n.y,
    )
}

fn strict_quadratic(pair: &ConePair, verdict: Verdict, lambda: f64) -> Result<Sym2, ConesError> {
    let (e1, e2) = (pair.source.lo_ray(), pair.source.hi_ray());
    let (f1, f2) = (pair.target.lo_ray(), pair.target.hi_ray());
    let (a, b) = if verdict == Verdict::RightAngle {
        (lambda, 1.0 / lambda)
    } else {
        let (p, r) = (e1.dot(f2), f1.dot(e2));
        if !(p / r > 0.0) {
            return Err(ConesError::Unsolvable(format!(
                "ray symmetry needs ⟨e1,f2⟩ and ⟨f1,e2⟩ of one sign, got {p:e} and {r:e}"
            )));
        }
        (p / r, 1.0)
    };
    // Q = [a f1, b f2] · [e1 e2]⁻¹.
    let det_e = e1.cross(e2);
    let (g1, g2) = (f1 * a, f2 * b);
    let m = [
        [(g1.x * e2.y - g2.x * e1.y) / det_e, (g2.x * e1.x - g1.x * e2.x) / det_e],
        [(g1.y * e2.y - g2.y * e1.y) / det_e, (g2.y * e1.x - g1.y * e2.x) / det_e],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) {
        return Err(ConesError::Unsolvable("ray map reverses orientation".into()));
    }
    let s = 1.0 / det.sqrt();
    // Symmetric by construction; average the off-diagonal round-off.
    let q = Sym2::new(m[0][0] * s, 0.5 * (m[0][1] + m[1][0]) * s, m[1][1] * s);
    // Renormalise the determinant after symmetrisation.
    Ok(q.scale(1.0 / q.det().sqrt()))
}

/// `f(t) = √(A(t − t0)² + C)` solving `f″ = c/f³` with `c = A·C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeProfile {
    pub a: f64,
    pub t0: f64,
    pub cc: f64,
    pub c: f64,
    /// Largest `|f″ − c/f³|` with `f″` from the quotient rule.
    pub residual_analytic: f64,
    /// Largest `|f″ − c/f³|` with `f″` from Richardson-extrapolated central
    /// differences.
    pub residual_fd: f64,
}

impl OdeProfile {
    pub fn f(&self, t: f64) -> f64 {
        (self.a * (t - self.t0).powi(2) + self.cc).sqrt()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_analytic.max(self.residual_fd)
    }
}

/// Profile and residuals on `samples` equispaced points of `[t_lo, t_hi]`.
pub fn ode_profile(a: f64, t0: f64, cc: f64, range: (f64, f64), samples: usize) -> Result<OdeProfile, ConesError> {
    if !(a > 0.0 && cc > 0.0) {
        return Err(ConesError::InvalidParameter(format!(
            "need A > 0 and C > 0, got A = {a}, C = {cc}"
        )));
    }
    if samples < 2 || !(range.1 > range.0) {
        return Err(ConesError::InvalidParameter("need an increasing range and ≥ 2 samples".into()));
    }
    let mut p = OdeProfile {
        a,
        t0,
        cc,
        c: a * cc,
        residual_analytic: 0.0,
        residual_fd: 0.0,
    };
    let f = |t: f64| p.f(t);
    // Forward difference `f(t + h) − f(t)` in conjugate form, so the second
    // difference cancels only `O(h)` quantities.
    let df = |t: f64, h: f64| {
        let s = t - t0;
        a * h * (2.0 * s + h) / (f(t + h) + f(t))
    };
    let d2 = |t: f64, h: f64| (df(t, h) - df(t - h, h)) / (h * h);
    let h = 1e-3;
    let (mut ra, mut rf) = (0.0f64, 0.0f64);
    for i in 0..samples {
        let t = range.0 + (range.1 - range.0) * i as f64 / (samples - 1) as f64;
        let ft = f(t);
        let s = t - t0;
        let fp = a * s / ft;
        let fpp = (a * ft - a * s * fp) / (ft * ft);
        let rhs = p.c / ft.powi(3);
        ra = ra.max((fpp - rhs).abs());
        let r1 = (4.0 * d2(t, h / 2.0) - d2(t, h)) / 3.0;
        let r2 = (4.0 * d2(t, h / 4.0) - d2(t, h / 2.0)) / 3.0;
        let fd = (16.0 * r2 - r1) / 15.0;
        rf = rf.max((fd - rhs).abs());
    }
    p.residual_analytic = ra;
    p.residual_fd = rf;
    Ok(p)
}

/// Homogeneity degrees and section exponents for dimension `n`, flat
/// dimension `m` and density degrees `l` (source) and `k` (target).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub n: f64,
    pub m: f64,
    pub l: f64,
    pub k: f64,
    /// `(n + l)/(n + k)`.
    pub alpha: f64,
    pub deg_u: f64,
    pub deg_v: f64,
    pub beta_u: f64,
    pub beta_v: f64,
    pub beta_flat: f64,
    /// `1/(1 + m/(m + k))`; undefined when `m = k = 0` or `m = 0`.
    pub beta_cone_u: Option<f64>,
    pub beta_cone_v: Option<f64>,
    pub gamma_vol: f64,
    pub chi_exponent: f64,
    pub kappa_star: f64,
}

pub fn exponents(n: f64, m: f64, l: f64, k: f64) -> Result<ExponentTable, ConesError> {
    if !(n >= 2.0) || !(0.0..=n).contains(&m) || !(l >= 0.0) || !(k >= 0.0) {
        return Err(ConesError::InvalidExponents(format!(
            "need n ≥ 2, 0 ≤ m ≤ n, l ≥ 0, k ≥ 0; got n={n}, m={m}, l={l}, k={k}"
        )));
    }
    let alpha = (n + l) / (n + k);
    let (beta_cone_u, beta_cone_v) = if m > 0.0 {
        (Some(1.0 / (1.0 + m / (m + k))), Some(1.0 / (1.0 + (m + k) / m)))
    } else {
        (None, None)
    };
    let gamma_vol = (n - m) / 2.0 + if m > 0.0 { m / (1.0 + m / (m + k)) } else { 0.0 };
    Ok(ExponentTable {
        n,
        m,
        l,
        k,
        alpha,
        deg_u: 1.0 + alpha,
        deg_v: 1.0 + 1.0 / alpha,
        beta_u: 1.0 / (1.0 + alpha),
        beta_v: 1.0 / (1.0 + 1.0 / alpha),
        beta_flat: 0.5,
        beta_cone_u,
        beta_cone_v,
        gamma_vol,
        chi_exponent: 2.0 * (n + l) / (1.0 + alpha),
        kappa_star: (n + k) * (n + l) / ((n + k) + (n + l)),
    })
}
