//! Densities with homogeneity metadata and their integrals over convex
//! polygons and segments.

mod gauss;

pub use gauss::rule as gauss_rule;

use crate::convex2d::{HalfPlane, Polygon, Sector, Vec2, TOL_GEOM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use thiserror::Error;

pub const TOL_INT: f64 = 1e-8;
pub const MAX_DEPTH: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("adaptive quadrature did not converge within depth {0}")]
    QuadratureFailure(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityKind {
    Uniform {
        c: f64,
    },
    /// `c · (x₂)₊^k`.
    MonomialYn { c: f64, k: f64 },
    /// `c · |x|^l · a(θ)` with `a` linearly interpolated from uniform samples
    /// on [−π, π); an empty profile means `a ≡ 1`.
    RadialHomog {
        c: f64,
        l: f64,
        #[serde(default)]
        profile: Vec<f64>,
    },
    /// `base · (1 + amplitude · |x|^alpha)`.
    HolderPerturbed {
        base: Box<DensityKind>,
        amplitude: f64,
        alpha: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Support {
    HalfPlane { half_plane: HalfPlane },
    Sector { sector: Sector },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Density {
    pub kind: DensityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Support>,
}

impl Density {
    pub fn new(kind: DensityKind) -> Result<Self, MeasureError> {
        validate(&kind)?;
        Ok(Density { kind, support: None })
    }

    pub fn uniform(c: f64) -> Self {
        Density::new(DensityKind::Uniform { c }).expect("valid uniform density")
    }

    pub fn monomial_yn(c: f64, k: f64) -> Result<Self, MeasureError> {
        Density::new(DensityKind::MonomialYn { c, k })
    }

    pub fn with_support(mut self, s: Support) -> Self {
        self.support = Some(s);
        self
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        validate(&self.kind)
    }

    pub fn homogeneity_degree(&self) -> Option<f64> {
        match &self.kind {
            DensityKind::Uniform { .. } => Some(0.0),
            DensityKind::MonomialYn { k, .. } => Some(*k),
            DensityKind::RadialHomog { l, .. } => Some(*l),
            DensityKind::HolderPerturbed { .. } => None,
        }
    }

    /// Same density with its constant factor multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Density {
        Density {
            kind: scale_kind(&self.kind, s),
            support: self.support.clone(),
        }
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        if let Some(s) = &self.support {
            if !support_contains(s, x) {
                return 0.0;
            }
        }
        eval_kind(&self.kind, x)
    }

    /// Convex pieces (as half-plane lists) whose union is the region where
    /// the density may be non-zero. `None` means the whole plane.
    fn pieces(&self) -> Vec<Vec<HalfPlane>> {
        let mut base: Vec<Vec<HalfPlane>> = vec![Vec::new()];
        if needs_upper_half(&self.kind) {
            base[0].push(HalfPlane {
                normal: Vec2::new(0.0, -1.0),
                offset: 0.0,
            });
        }
        match &self.support {
            None => base,
            Some(Support::HalfPlane { half_plane }) => {
                base[0].push(*half_plane);
                base
            }
            Some(Support::Sector { sector }) => sector_pieces(sector)
                .into_iter()
                .map(|mut hs| {
                    hs.extend(base[0].iter().copied());
                    hs
                })
                .collect(),
        }
    }

    fn is_polynomial(&self) -> bool {
        match &self.kind {
            DensityKind::Uniform { .. } => true,
            DensityKind::MonomialYn { k, .. } => k.fract() == 0.0,
            DensityKind::RadialHomog { l, profile, .. } => {
                constant_profile(profile) && l.fract() == 0.0 && (*l as i64) % 2 == 0
            }
            DensityKind::HolderPerturbed { .. } => false,
        }
    }

    fn polynomial_degree(&self) -> usize {
        match &self.kind {
            DensityKind::MonomialYn { k, .. } => *k as usize,
            DensityKind::RadialHomog { l, .. } => *l as usize,
            _ => 0,
        }
    }

    /// Point where the density fails to be smooth, if any.
    fn singular_point(&self) -> Option<Vec2> {
        match &self.kind {
            DensityKind::RadialHomog { .. } | DensityKind::HolderPerturbed { .. } => Some(Vec2::ZERO),
            _ => None,
        }
    }
}

fn validate(kind: &DensityKind) -> Result<(), MeasureError> {
    let bad = |m: String| Err(MeasureError::InvalidDensity(m));
    match kind {
        DensityKind::Uniform { c } => {
            if !(*c > 0.0 && c.is_finite()) {
                return bad(format!("uniform constant must be positive, got {c}"));
            }
        }
        DensityKind::MonomialYn { c, k } => {
            if !(*c > 0.0 && c.is_finite()) {
                return bad(format!("constant must be positive, got {c}"));
            }
            if !(*k >= 0.0 && k.is_finite()) {
                return bad(format!("exponent k must be non-negative, got {k}"));
            }
        }
        DensityKind::RadialHomog { c, l, profile } => {
            if !(*c > 0.0 && c.is_finite()) {
                return bad(format!("constant must be positive, got {c}"));
            }
            if !(*l >= 0.0 && l.is_finite()) {
                return bad(format!("exponent l must be non-negative, got {l}"));
            }
            if profile.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return bad("angular profile must be non-negative".into());
            }
        }
        DensityKind::HolderPerturbed {
            base,
            amplitude,
            alpha,
        } => {
            validate(base)?;
            if !(amplitude.abs() < 1.0) {
                return bad(format!("|amplitude| must be < 1, got {amplitude}"));
            }
            if !(*alpha > 0.0 && alpha.is_finite()) {
                return bad(format!("alpha must be positive, got {alpha}"));
            }
        }
    }
    Ok(())
}

fn scale_kind(kind: &DensityKind, s: f64) -> DensityKind {
    match kind {
        DensityKind::Uniform { c } => DensityKind::Uniform { c: c * s },
        DensityKind::MonomialYn { c, k } => DensityKind::MonomialYn { c: c * s, k: *k },
        DensityKind::RadialHomog { c, l, profile } => DensityKind::RadialHomog {
            c: c * s,
            l: *l,
            profile: profile.clone(),
        },
        DensityKind::HolderPerturbed {
            base,
            amplitude,
            alpha,
        } => DensityKind::HolderPerturbed {
            base: Box::new(scale_kind(base, s)),
            amplitude: *amplitude,
            alpha: *alpha,
        },
    }
}

fn needs_upper_half(kind: &DensityKind) -> bool {
    match kind {
        DensityKind::MonomialYn { .. } => true,
        DensityKind::HolderPerturbed { base, .. } => needs_upper_half(base),
        _ => false,
    }
}

fn constant_profile(p: &[f64]) -> bool {
    p.windows(2).all(|w| w[0] == w[1]) && p.first().is_none_or(|&a| a == 1.0)
}

fn profile_value(p: &[f64], theta: f64) -> f64 {
    if p.is_empty() {
        return 1.0;
    }
    let n = p.len();
    let s = (theta + PI).rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    p[i] * (1.0 - f) + p[(i + 1) % n] * f
}

fn eval_kind(kind: &DensityKind, x: Vec2) -> f64 {
    match kind {
        DensityKind::Uniform { c } => *c,
        DensityKind::MonomialYn { c, k } => {
            if x.y < 0.0 {
                0.0
            } else if *k == 0.0 {
                *c
            } else {
                c * x.y.powf(*k)
            }
        }
        DensityKind::RadialHomog { c, l, profile } => {
            let r = x.norm();
            let a = profile_value(profile, x.angle());
            if *l == 0.0 {
                c * a
            } else {
                c * r.powf(*l) * a
            }
        }
        DensityKind::HolderPerturbed {
            base,
            amplitude,
            alpha,
        } => eval_kind(base, x) * (1.0 + amplitude * x.norm().powf(*alpha)),
    }
}

fn support_contains(s: &Support, x: Vec2) -> bool {
    match s {
        Support::HalfPlane { half_plane } => half_plane.contains(x),
        Support::Sector { sector } => sector.contains_point(x),
    }
}

/// Splits a sector into convex pieces of span ≤ π described by half-planes.
fn sector_pieces(s: &Sector) -> Vec<Vec<HalfPlane>> {
    let piece = |lo: f64, span: f64| {
        let a = Vec2::from_angle(lo);
        let b = Vec2::from_angle(lo + span);
        // Left of ray a, right of ray b.
        vec![
            HalfPlane {
                normal: a.perp() * -1.0,
                offset: 0.0,
            },
            HalfPlane {
                normal: b.perp(),
                offset: 0.0,
            },
        ]
    };
    if s.span() >= 2.0 * PI - 1e-12 {
        return vec![Vec::new()];
    }
    if s.span() <= PI {
        if s.is_half_plane() {
            let n = s.bisector();
            return vec![vec![HalfPlane {
                normal: -n,
                offset: 0.0,
            }]];
        }
        return vec![piece(s.theta_lo(), s.span())];
    }
    let h = s.span() / 2.0;
    vec![piece(s.theta_lo(), h), piece(s.theta_lo() + h, h)]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    /// One symmetric rule per fan triangle; exact for polynomial integrands
    /// up to degree `2·order − 2`.
    PolynomialExact,
    /// Subdivide until the local change drops below the tolerance share.
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub order: usize,
    pub mode: QuadMode,
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            order: 8,
            mode: QuadMode::Adaptive,
            tol: TOL_INT,
            max_depth: MAX_DEPTH,
        }
    }
}

/// `∫_P g`, together with first moments `∫_P g·x`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MassMoments {
    pub mass: f64,
    pub first: Vec2,
}

impl MassMoments {
    pub fn centroid(&self) -> Option<Vec2> {
        (self.mass > 0.0).then(|| self.first / self.mass)
    }
}

pub fn integrate(d: &Density, p: &Polygon, q: &Quadrature) -> Result<f64, MeasureError> {
    Ok(integrate_moments(d, p, q)?.mass)
}

pub fn integrate_moments(d: &Density, p: &Polygon, q: &Quadrature) -> Result<MassMoments, MeasureError> {
    if p.is_empty() {
        return Ok(MassMoments::default());
    }
    let mut total = MassMoments::default();
    for hs in d.pieces() {
        let mut piece = p.clone();
        for h in &hs {
            piece = piece.clip(h);
            if piece.is_empty() {
                break;
            }
        }
        if piece.is_empty() {
            continue;
        }
        let m = integrate_piece(&d.kind, d, &piece, q)?;
        total.mass += m.mass;
        total.first += m.first;
    }
    Ok(total)
}

fn integrate_piece(
    kind: &DensityKind,
    d: &Density,
    p: &Polygon,
    q: &Quadrature,
) -> Result<MassMoments, MeasureError> {
    match kind {
        DensityKind::Uniform { c } => {
            let m = p.moments();
            Ok(MassMoments {
                mass: c * m.area,
                first: m.centroid * (c * m.area),
            })
        }
        DensityKind::MonomialYn { c, k } => {
            let s = monomial_slabs(p, *k);
            Ok(MassMoments {
                mass: c * s[0],
                first: Vec2::new(c * s[1], c * s[2]),
            })
        }
        _ => {
            let f = |x: Vec2| {
                let g = eval_kind(kind, x);
                [g, g * x.x, g * x.y]
            };
            let exact = q.mode == QuadMode::PolynomialExact || d.is_polynomial();
            let order = if d.is_polynomial() {
                q.order.max(d.polynomial_degree() / 2 + 2)
            } else {
                q.order
            };
            let r = integrate_fn(p, d.singular_point(), order, exact, q.tol, q.max_depth, f)?;
            Ok(MassMoments {
                mass: r[0],
                first: Vec2::new(r[1], r[2]),
            })
        }
    }
}

/// Integrates `f` (three components; the first drives refinement) over a
/// convex polygon. The fan is rooted at `singular` when it lies in `p` so
/// that the collapsed vertex of every Duffy map sits on the singularity.
/// Adaptive mode refines the triangle with the largest error estimate until
/// the summed estimate drops below `tol` relative to the integral.
pub fn integrate_fn(
    p: &Polygon,
    singular: Option<Vec2>,
    order: usize,
    single_level: bool,
    tol: f64,
    max_depth: usize,
    f: impl Fn(Vec2) -> [f64; 3],
) -> Result<[f64; 3], MeasureError> {
    let tris = fan(p, singular);
    if single_level {
        let mut out = [0.0; 3];
        for t in &tris {
            add3(&mut out, duffy(t, order, &f));
        }
        return Ok(out);
    }
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = ([0.0; 3], 0.0);
    for t in tris {
        let whole = duffy(&t, order, &f);
        let node = TriNode::new(t, whole, 0, order, &f);
        add3(&mut total, node.value);
        err += node.err;
        heap.push(node);
    }
    let mut steps = 0usize;
    loop {
        if steps % 64 == 0 {
            // Re-sum to keep the running totals free of drift.
            total = [0.0; 3];
            err = 0.0;
            for n in heap.iter() {
                add3(&mut total, n.value);
                err += n.err;
            }
        }
        steps += 1;
        if err <= tol * total[0].abs() || err <= 1e-15 * heap.len() as f64 * total[0].abs() {
            return Ok(total);
        }
        let Some(worst) = heap.pop() else {
            return Ok(total);
        };
        if worst.depth + 1 >= max_depth {
            return Err(MeasureError::QuadratureFailure(max_depth));
        }
        sub3(&mut total, worst.value);
        err -= worst.err;
        for (k, v) in worst.kids.iter().zip(worst.kid_values) {
            let node = TriNode::new(*k, v, worst.depth + 1, order, &f);
            add3(&mut total, node.value);
            err += node.err;
            heap.push(node);
        }
    }
}

fn sub3(acc: &mut [f64; 3], v: [f64; 3]) {
    for c in 0..3 {
        acc[c] -= v[c];
    }
}

fn add3(acc: &mut [f64; 3], v: [f64; 3]) {
    for c in 0..3 {
        acc[c] += v[c];
    }
}

struct TriNode {
    kids: [Tri; 4],
    kid_values: [[f64; 3]; 4],
    value: [f64; 3],
    err: f64,
    depth: usize,
}

impl TriNode {
    fn new(t: Tri, whole: [f64; 3], depth: usize, n: usize, f: &impl Fn(Vec2) -> [f64; 3]) -> Self {
        let mab = (t[0] + t[1]) / 2.0;
        let mbc = (t[1] + t[2]) / 2.0;
        let mca = (t[2] + t[0]) / 2.0;
        // The first child keeps the collapsed vertex.
        let kids: [Tri; 4] = [[t[0], mab, mca], [mab, t[1], mbc], [mca, mbc, t[2]], [mbc, mca, mab]];
        let kid_values = kids.map(|k| duffy(&k, n, f));
        let mut value = [0.0; 3];
        for v in kid_values {
            add3(&mut value, v);
        }
        TriNode {
            kids,
            kid_values,
            value,
            err: (value[0] - whole[0]).abs(),
            depth,
        }
    }
}

impl PartialEq for TriNode {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err).is_eq()
    }
}
impl Eq for TriNode {}
impl PartialOrd for TriNode {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for TriNode {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

type Tri = [Vec2; 3];

fn tri_area(t: &Tri) -> f64 {
    ((t[1] - t[0]).cross(t[2] - t[0]) / 2.0).abs()
}

fn fan(p: &Polygon, singular: Option<Vec2>) -> Vec<Tri> {
    let v = p.vertices();
    let n = v.len();
    let apex = singular.filter(|&s| p.contains(s));
    match apex {
        Some(s) => (0..n)
            .map(|i| [s, v[i], v[(i + 1) % n]])
            .filter(|t| tri_area(t) > TOL_GEOM * TOL_GEOM * 1e-3)
            .collect(),
        None => (1..n - 1).map(|i| [v[0], v[i], v[i + 1]]).collect(),
    }
}

/// Collapsed tensor Gauss rule with the collapsed vertex at `t[0]`; exact for
/// polynomials of total degree `2n − 2`.
fn duffy(t: &Tri, n: usize, f: &impl Fn(Vec2) -> [f64; 3]) -> [f64; 3] {
    let r = gauss::rule(n);
    let jac = 2.0 * tri_area(t);
    let mut acc = [0.0; 3];
    for (s, ws) in r.nodes.iter().zip(&r.weights) {
        for (u, wu) in r.nodes.iter().zip(&r.weights) {
            let x = t[0] + (t[1] - t[0]) * *s + (t[2] - t[1]) * (s * u);
            let w = ws * wu * s * jac;
            let v = f(x);
            for c in 0..3 {
                acc[c] += w * v[c];
            }
        }
    }
    acc
}

/// `[∫ y^k, ∫ x·y^k, ∫ y^{k+1}]` over a polygon in the closed upper half
/// plane, integrated slab by slab in `y` with exact power integrals.
fn monomial_slabs(p: &Polygon, k: f64) -> [f64; 3] {
    let v = p.vertices();
    let n = v.len();
    let mut ys: Vec<f64> = v.iter().map(|w| w.y.max(0.0)).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut out = [0.0; 3];
    for w in ys.windows(2) {
        let (ya, yb) = (w[0], w[1]);
        if yb - ya <= 0.0 {
            continue;
        }
        let ym = (ya + yb) / 2.0;
        // Boundary x(y) on each side: value at ym and slope dx/dy.
        let mut left = None;
        let mut right = None;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            let (lo, hi) = (a.y.min(b.y), a.y.max(b.y));
            if hi - lo <= 0.0 || lo > ym || hi < ym {
                continue;
            }
            let slope = (b.x - a.x) / (b.y - a.y);
            let x = a.x + (ym - a.y) * slope;
            if b.y > a.y {
                right = Some((x, slope));
            } else {
                left = Some((x, slope));
            }
        }
        let (Some((xl, sl)), Some((xr, sr))) = (left, right) else {
            continue;
        };
        // Width W(s) = w0 + w1 s and (xr² − xl²)/2 = q0 + q1 s + q2 s², s = y − ym.
        let w0 = xr - xl;
        let w1 = sr - sl;
        let q0 = (xr * xr - xl * xl) / 2.0;
        let q1 = xr * sr - xl * sl;
        let q2 = (sr * sr - sl * sl) / 2.0;
        let m = slab_power_moments(ya, yb, k);
        let m1 = slab_power_moments(ya, yb, k + 1.0);
        out[0] += w0 * m[0] + w1 * m[1];
        out[1] += q0 * m[0] + q1 * m[1] + q2 * m[2];
        out[2] += w0 * m1[0] + w1 * m1[1];
    }
    out
}

/// `[∫ y^k, ∫ y^k s, ∫ y^k s²]` over `[ya, yb]` with `s = y − (ya+yb)/2`.
fn slab_power_moments(ya: f64, yb: f64, k: f64) -> [f64; 3] {
    let ym = (ya + yb) / 2.0;
    let h = (yb - ya) / 2.0;
    if ya >= yb - ya {
        // y^k is smooth across the slab; a 12-point rule is exact to
        // round-off for the ratios yb/ya ≤ 2 met here.
        let r = gauss::rule(12);
        let mut out = [0.0; 3];
        for (t, w) in r.nodes.iter().zip(&r.weights) {
            let s = -h + 2.0 * h * t;
            let y = ym + s;
            let g = if k == 0.0 { 1.0 } else { y.powf(k) };
            let wg = w * 2.0 * h * g;
            out[0] += wg;
            out[1] += wg * s;
            out[2] += wg * s * s;
        }
        return out;
    }
    let pw = |j: f64| (yb.powf(k + j + 1.0) - ya.powf(k + j + 1.0)) / (k + j + 1.0);
    let i0 = pw(0.0);
    let i1 = pw(1.0);
    let i2 = pw(2.0);
    [i0, i1 - ym * i0, i2 - 2.0 * ym * i1 + ym * ym * i0]
}

/// `∫_P g·w` for a smooth weight `w`, by adaptive quadrature on the
/// support pieces of `g`.
pub fn integrate_weighted(
    d: &Density,
    p: &Polygon,
    q: &Quadrature,
    w: impl Fn(Vec2) -> f64,
) -> Result<f64, MeasureError> {
    if p.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for hs in d.pieces() {
        let mut piece = p.clone();
        for h in &hs {
            piece = piece.clip(h);
            if piece.is_empty() {
                break;
            }
        }
        if piece.is_empty() {
            continue;
        }
        let r = integrate_fn(&piece, d.singular_point(), q.order, false, q.tol, q.max_depth, |x| {
            [eval_kind(&d.kind, x) * w(x), 0.0, 0.0]
        })?;
        total += r[0];
    }
    Ok(total)
}

/// `∫_{[a,b]} g ds`.
pub fn integrate_segment(d: &Density, a: Vec2, b: Vec2, tol: f64) -> Result<f64, MeasureError> {
    let mut total = 0.0;
    for hs in d.pieces() {
        let Some((a, b)) = clip_segment(a, b, &hs) else {
            continue;
        };
        total += segment_piece(&d.kind, d, a, b, tol)?;
    }
    Ok(total)
}

fn clip_segment(mut a: Vec2, mut b: Vec2, hs: &[HalfPlane]) -> Option<(Vec2, Vec2)> {
    for h in hs {
        let sa = h.eval(a);
        let sb = h.eval(b);
        if sa > 0.0 && sb > 0.0 {
            return None;
        }
        if sa > 0.0 {
            a = a + (b - a) * (sa / (sa - sb));
        } else if sb > 0.0 {
            b = b + (a - b) * (sb / (sb - sa));
        }
    }
    Some((a, b))
}

fn segment_piece(kind: &DensityKind, d: &Density, a: Vec2, b: Vec2, tol: f64) -> Result<f64, MeasureError> {
    let len = a.dist(b);
    if len == 0.0 {
        return Ok(0.0);
    }
    match kind {
        DensityKind::Uniform { c } => Ok(c * len),
        DensityKind::MonomialYn { c, k } => {
            let (y0, y1) = (a.y.max(0.0), b.y.max(0.0));
            let (lo, hi) = (y0.min(y1), y0.max(y1));
            if *k == 0.0 {
                return Ok(c * len);
            }
            if hi - lo <= 1e-3 * hi {
                let r = gauss::rule(8);
                let s: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(t, w)| w * (y0 + (y1 - y0) * t).powf(*k))
                    .sum();
                return Ok(c * len * s);
            }
            let mean = (hi.powf(k + 1.0) - lo.powf(k + 1.0)) / ((k + 1.0) * (hi - lo));
            Ok(c * len * mean)
        }
        _ => {
            let f = |x: Vec2| eval_kind(kind, x);
            // Split at the point nearest a singularity so it sits at an end.
            let mut pieces = vec![(a, b)];
            if let Some(s) = d.singular_point() {
                let e = b - a;
                let t = ((s - a).dot(e) / e.norm2()).clamp(0.0, 1.0);
                if t > 0.0 && t < 1.0 {
                    let m = a + e * t;
                    pieces = vec![(m, a), (m, b)];
                } else if t >= 1.0 {
                    pieces = vec![(b, a)];
                }
            }
            let mut total = 0.0;
            for (p, q) in pieces {
                total += adapt_segment(p, q, &f, tol)?;
            }
            Ok(total)
        }
    }
}

fn gauss_segment(a: Vec2, b: Vec2, f: &impl Fn(Vec2) -> f64) -> f64 {
    let r = gauss::rule(8);
    let len = a.dist(b);
    r.nodes
        .iter()
        .zip(&r.weights)
        .map(|(t, w)| w * f(a + (b - a) * *t))
        .sum::<f64>()
        * len
}

/// Global adaptive bisection: always splits the interval with the largest
/// error estimate.
fn adapt_segment(a: Vec2, b: Vec2, f: &impl Fn(Vec2) -> f64, tol: f64) -> Result<f64, MeasureError> {
    struct Piece {
        a: Vec2,
        b: Vec2,
        value: f64,
        err: f64,
        depth: usize,
    }
    let make = |a: Vec2, b: Vec2, depth: usize| {
        let whole = gauss_segment(a, b, f);
        let m = (a + b) / 2.0;
        let value = gauss_segment(a, m, f) + gauss_segment(m, b, f);
        Piece {
            a,
            b,
            value,
            err: (value - whole).abs(),
            depth,
        }
    };
    let mut pieces = vec![make(a, b, 0)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.err).sum();
        if err <= tol * total.abs() || err <= 1e-15 * pieces.len() as f64 * total.abs() || total == 0.0 && err == 0.0 {
            return Ok(total);
        }
        let (i, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("non-empty");
        let p = pieces.swap_remove(i);
        if p.depth + 1 >= 2 * MAX_DEPTH {
            return Err(MeasureError::QuadratureFailure(p.depth + 1));
        }
        let m = (p.a + p.b) / 2.0;
        pieces.push(make(p.a, m, p.depth + 1));
        pieces.push(make(m, p.b, p.depth + 1));
    }
}

/// Largest relative defect `|g(tx) − t^d g(x)| / (|g(x)|·t^d + eps)` over
/// seeded sample points in [−1, 1]² and the given scales.
pub fn homogeneity_check(d: &Density, samples: usize, scales: &[f64]) -> Result<f64, MeasureError> {
    let deg = d.homogeneity_degree().ok_or_else(|| {
        MeasureError::Precondition("density has no homogeneity degree".into())
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let gx = d.eval(x);
        for &t in scales {
            let tg = t.powf(deg);
            let defect = (d.eval(x * t) - tg * gx).abs() / (gx.abs() * tg + 1e-300);
            if gx != 0.0 || d.eval(x * t) != 0.0 {
                worst = worst.max(defect);
            }
        }
    }
    Ok(worst)
}

/// Empirical doubling constant: the largest ratio `μ(E) / μ(½E)` over
/// seeded random ellipses (as 64-gons) centred in `region` and meeting the
/// support.
pub fn doubling_witness(d: &Density, region: &Polygon, trials: usize, seed: u64) -> Result<f64, MeasureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = region.bbox();
    let diam = region.diameter();
    let q = Quadrature::default();
    let mut worst: f64 = 1.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < trials && attempts < trials * 100 {
        attempts += 1;
        let c = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
        if !region.contains(c) || d.eval(c) <= 0.0 {
            continue;
        }
        let a = diam * rng.gen_range(0.01..0.5);
        let b = a * rng.gen_range(0.2..1.0);
        let th: f64 = rng.gen_range(0.0..PI);
        let shape = |s: f64| {
            let v = (0..64)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / 64.0;
                    c + Vec2::from_angle(th) * (a * s * t.cos()) + Vec2::from_angle(th).perp() * (b * s * t.sin())
                })
                .collect();
            Polygon::new(v)
        };
        let (Ok(e), Ok(h)) = (shape(1.0), shape(0.5)) else {
            continue;
        };
        let me = integrate(d, &e, &q)?;
        let mh = integrate(d, &h, &q)?;
        if mh > 0.0 {
            worst = worst.max(me / mh);
            done += 1;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> Polygon {
        Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Density::uniform(1.0).eval(Vec2::new(3.0, -2.0)), 1.0);
        let m = Density::monomial_yn(1.0, 1.0).unwrap();
        assert_eq!(m.eval(Vec2::new(0.3, 0.5)), 0.5);
        assert_eq!(m.eval(Vec2::new(0.3, -0.5)), 0.0);
        let h = Density::new(DensityKind::HolderPerturbed {
            base: Box::new(DensityKind::Uniform { c: 1.0 }),
            amplitude: 0.2,
            alpha: 0.5,
        })
        .unwrap();
        assert_relative_eq!(h.eval(Vec2::new(1.0, 0.0)), 1.2);
    }

    #[test]
    fn integrate_examples() {
        let q = Quadrature::default();
        assert_relative_eq!(integrate(&Density::uniform(1.0), &unit_square(), &q).unwrap(), 1.0);
        let m1 = Density::monomial_yn(1.0, 1.0).unwrap();
        assert_relative_eq!(integrate(&m1, &unit_square(), &q).unwrap(), 0.5, epsilon = 1e-15);
        let tri = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
        ])
        .unwrap();
        let m15 = Density::monomial_yn(1.0, 1.5).unwrap();
        let v = integrate(&m15, &tri, &q).unwrap();
        assert_relative_eq!(v, 1.0 / 2.5 / 3.5, epsilon = 1e-14);
    }

    #[test]
    fn monomial_integral_matches_monte_carlo() {
        let tri = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
        ])
        .unwrap();
        let d = Density::monomial_yn(1.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2_000_000;
        let mut s = 0.0;
        for _ in 0..n {
            let x: f64 = rng.gen();
            let y: f64 = rng.gen();
            if y <= x {
                s += y.powf(1.5);
            }
        }
        let mc = s / n as f64;
        let exact = integrate(&d, &tri, &Quadrature::default()).unwrap();
        assert!((mc - exact).abs() < 5e-4, "{mc} vs {exact}");
    }

    #[test]
    fn monomial_moments_match_adaptive_engine() {
        let p = Polygon::new(vec![
            Vec2::new(-0.4, -0.3),
            Vec2::new(1.1, 0.05),
            Vec2::new(0.9, 1.2),
            Vec2::new(0.1, 0.8),
        ])
        .unwrap();
        let q = Quadrature::default();
        for k in [0.0, 1.0, 1.5, 2.0, 0.3] {
            let d = Density::monomial_yn(1.3, k).unwrap();
            let fast = integrate_moments(&d, &p, &q).unwrap();
            let clipped = p.clip(&HalfPlane::new(Vec2::new(0.0, -1.0), 0.0).unwrap());
            let slow = integrate_fn(&clipped, None, 8, false, 1e-11, 30, |x| {
                let g = eval_kind(&d.kind, x);
                [g, g * x.x, g * x.y]
            })
            .unwrap();
            assert_relative_eq!(fast.mass, slow[0], max_relative = 1e-8);
            assert_relative_eq!(fast.first.x, slow[1], max_relative = 1e-8);
            assert_relative_eq!(fast.first.y, slow[2], max_relative = 1e-8);
        }
    }

    #[test]
    fn radial_density_integral() {
        // ∫ over the unit disk of |x| = 2π/3; compare on a 512-gon.
        let disk = crate::convex2d::regular_polygon(Vec2::ZERO, 1.0, 512, 0.0);
        let d = Density::new(DensityKind::RadialHomog {
            c: 1.0,
            l: 1.0,
            profile: vec![],
        })
        .unwrap();
        let v = integrate(&d, &disk, &Quadrature::default()).unwrap();
        // Exact value on the polygon: Σ over triangles of ∫|x|, the n-gon's
        // value differs from the disk by O(n⁻²).
        assert!((v - 2.0 * PI / 3.0).abs() < 1e-4, "{v}");
        // Even l with constant profile is polynomial: exact.
        let d2 = Density::new(DensityKind::RadialHomog {
            c: 1.0,
            l: 2.0,
            profile: vec![],
        })
        .unwrap();
        let sq = Polygon::rectangle(-1.0, -1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            integrate(&d2, &sq, &Quadrature::default()).unwrap(),
            8.0 / 3.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn holder_integral_converges() {
        let d = Density::new(DensityKind::HolderPerturbed {
            base: Box::new(DensityKind::Uniform { c: 1.0 }),
            amplitude: 0.3,
            alpha: 0.5,
        })
        .unwrap();
        let q = Quadrature::default();
        // Quarter disk approximation vs closed form on the square [0,1]²:
        // compare the adaptive result at two tolerances.
        let a = integrate(&d, &unit_square(), &q).unwrap();
        let b = integrate(&d, &unit_square(), &Quadrature { tol: 1e-12, ..q }).unwrap();
        assert!((a - b).abs() <= 1e-8 * b, "{a} {b}");
    }

    #[test]
    fn segment_integrals() {
        let m = Density::monomial_yn(2.0, 1.0).unwrap();
        let v = integrate_segment(&m, Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1e-10).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        // Half the segment lies below y = 0.
        let v = integrate_segment(&m, Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0), 1e-10).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        let r = Density::new(DensityKind::RadialHomog {
            c: 1.0,
            l: 0.5,
            profile: vec![],
        })
        .unwrap();
        let v = integrate_segment(&r, Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), 1e-12).unwrap();
        assert_relative_eq!(v, 2.0 / 1.5, max_relative = 1e-9);
    }

    #[test]
    fn support_clips_integration() {
        let d = Density::uniform(1.0).with_support(Support::Sector {
            sector: Sector::new(0.0, PI / 2.0).unwrap(),
        });
        let sq = Polygon::rectangle(-1.0, -1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(integrate(&d, &sq, &Quadrature::default()).unwrap(), 1.0, epsilon = 1e-14);
        let wide = Density::uniform(1.0).with_support(Support::Sector {
            sector: Sector::new(0.0, 1.5 * PI).unwrap(),
        });
        assert_relative_eq!(integrate(&wide, &sq, &Quadrature::default()).unwrap(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn homogeneity_examples() {
        assert_eq!(homogeneity_check(&Density::uniform(1.0), 100, &[0.5, 2.0]).unwrap(), 0.0);
        let m = Density::monomial_yn(1.0, 2.0).unwrap();
        assert!(homogeneity_check(&m, 200, &[0.1, 0.5, 3.0]).unwrap() <= 1e-12);
        let h = Density::new(DensityKind::HolderPerturbed {
            base: Box::new(DensityKind::Uniform { c: 1.0 }),
            amplitude: 0.1,
            alpha: 0.5,
        })
        .unwrap();
        assert!(matches!(
            homogeneity_check(&h, 10, &[2.0]),
            Err(MeasureError::Precondition(_))
        ));
    }

    #[test]
    fn rejects_invalid() {
        assert!(Density::monomial_yn(1.0, -1.0).is_err());
        assert!(Density::new(DensityKind::Uniform { c: 0.0 }).is_err());
    }
}
