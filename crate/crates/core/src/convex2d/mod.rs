//! Exact planar convex geometry: points, half-planes, convex polygons,
//! sectors (planar cones) and enclosing ellipses.

mod ellipse;
mod sector;

pub use ellipse::{lowner_ellipse, lowner_ellipse_of_points, Ellipse, LownerOptions, Sym2};
pub use sector::{angle_diff, normalize_angle, Sector, ANGLE_TOL};

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use thiserror::Error;

/// Absolute geometric tolerance; domains are O(1) in size.
pub const TOL_GEOM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate region (area {0:e})")]
    DegenerateRegion(f64),
    #[error("sector of span {0} > pi has no dual cone")]
    NotDualizable(f64),
    #[error("index {0} is not a vertex of the polygon")]
    NotAVertex(usize),
    #[error("Lowner ellipse iteration did not converge after {iterations} iterations (error {error:e})")]
    EllipseNonConvergence { iterations: usize, error: f64 },
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("half-plane normal must be non-zero")]
    ZeroNormal,
    #[error("invalid sector: {0}")]
    InvalidSector(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise rotation by a right angle.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        self / self.norm()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

/// The closed half-plane `{x : normal . x <= offset}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Vec2, offset: f64) -> Result<Self, GeomError> {
        if !(normal.norm() > 0.0) || !offset.is_finite() {
            return Err(GeomError::ZeroNormal);
        }
        Ok(HalfPlane { normal, offset })
    }

    /// Signed value `normal . x - offset`; non-positive inside.
    pub fn eval(&self, x: Vec2) -> f64 {
        self.normal.dot(x) - self.offset
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.eval(x) <= TOL_GEOM * self.normal.norm()
    }

    /// The opposite closed half-plane.
    pub fn flipped(&self) -> HalfPlane {
        HalfPlane {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// A convex polygon with counter-clockwise vertices. The empty polygon has
/// no vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<Vec2>> for Polygon {
    type Error = GeomError;
    fn try_from(v: Vec<Vec2>) -> Result<Self, GeomError> {
        if v.is_empty() {
            Ok(Polygon::empty())
        } else {
            Polygon::new(v)
        }
    }
}

impl From<Polygon> for Vec<Vec2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    /// Validates convexity, reorients clockwise input and removes duplicate
    /// vertices.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeomError> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidPolygon("non-finite vertex".into()));
        }
        let mut v = dedup_cyclic(vertices);
        if v.len() < 3 {
            return Err(GeomError::InvalidPolygon(format!(
                "need at least 3 distinct vertices, got {}",
                v.len()
            )));
        }
        if signed_area(&v) < 0.0 {
            v.reverse();
        }
        let n = v.len();
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            let scale = (b - a).norm() * (c - b).norm();
            if turn < -TOL_GEOM * scale.max(TOL_GEOM) {
                return Err(GeomError::InvalidPolygon(format!(
                    "not convex at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        Ok(Polygon { vertices: v })
    }

    pub fn empty() -> Self {
        Polygon { vertices: Vec::new() }
    }

    /// Axis-aligned rectangle `[x0,x1] x [y0,y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeomError> {
        Polygon::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    pub(crate) fn from_raw(vertices: Vec<Vec2>) -> Self {
        if vertices.len() < 3 {
            Polygon::empty()
        } else {
            Polygon { vertices }
        }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            signed_area(&self.vertices)
        }
    }

    pub fn area_centroid(&self) -> Result<(f64, Vec2), GeomError> {
        let m = self.moments();
        if m.area <= TOL_GEOM * TOL_GEOM {
            return Err(GeomError::DegenerateRegion(m.area));
        }
        Ok((m.area, m.centroid))
    }

    /// Area, centroid and central second-moment matrix of the region.
    pub fn moments(&self) -> Moments {
        if self.is_empty() {
            return Moments::default();
        }
        let o = self.vertices[0];
        let n = self.vertices.len();
        let (mut a, mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i] - o;
            let q = self.vertices[(i + 1) % n] - o;
            let w = p.cross(q);
            a += w;
            sx += w * (p.x + q.x);
            sy += w * (p.y + q.y);
            sxx += w * (p.x * p.x + p.x * q.x + q.x * q.x);
            syy += w * (p.y * p.y + p.y * q.y + q.y * q.y);
            sxy += w * (2.0 * p.x * p.y + p.x * q.y + q.x * p.y + 2.0 * q.x * q.y);
        }
        let area = a / 2.0;
        if area.abs() < f64::MIN_POSITIVE {
            return Moments {
                area: 0.0,
                centroid: o,
                second: Sym2::new(0.0, 0.0, 0.0),
            };
        }
        let cx = sx / (6.0 * area);
        let cy = sy / (6.0 * area);
        let ixx = sxx / 12.0 / area - cx * cx;
        let iyy = syy / 12.0 / area - cy * cy;
        let ixy = sxy / 24.0 / area - cx * cy;
        Moments {
            area,
            centroid: o + Vec2::new(cx, cy),
            second: Sym2::new(ixx, ixy, iyy),
        }
    }

    /// Closed containment with tolerance `TOL_GEOM`.
    pub fn contains(&self, x: Vec2) -> bool {
        if self.is_empty() {
            return false;
        }
        self.edges().all(|(a, b)| {
            let e = b - a;
            e.cross(x - a) >= -TOL_GEOM * e.norm()
        })
    }

    pub fn clip(&self, h: &HalfPlane) -> Polygon {
        if self.is_empty() {
            return Polygon::empty();
        }
        let labels = vec![(); self.vertices.len()];
        let (v, _) = clip_labeled(&self.vertices, &labels, h, ());
        Polygon::from_raw(v)
    }

    /// Intersection with another convex polygon.
    pub fn intersect(&self, other: &Polygon) -> Polygon {
        let mut out = self.clone();
        for hp in other.half_planes() {
            if out.is_empty() {
                break;
            }
            out = out.clip(&hp);
        }
        out
    }

    /// Supporting half-planes of the edges, one per edge.
    pub fn half_planes(&self) -> Vec<HalfPlane> {
        self.edges()
            .filter_map(|(a, b)| {
                let e = b - a;
                if e.norm() <= 0.0 {
                    return None;
                }
                // Interior is to the left of a counter-clockwise edge.
                let normal = Vec2::new(e.y, -e.x);
                Some(HalfPlane {
                    normal,
                    offset: normal.dot(a),
                })
            })
            .collect()
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max(v[i].dist(v[j]));
            }
        }
        d
    }

    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> Result<Polygon, GeomError> {
        Polygon::new(self.vertices.iter().map(|&v| f(v)).collect())
    }

    /// Homothety about `center` by factor `t > 0`.
    pub fn scaled_about(&self, center: Vec2, t: f64) -> Polygon {
        Polygon::from_raw(
            self.vertices
                .iter()
                .map(|&v| center + (v - center) * t)
                .collect(),
        )
    }

    /// Distance from `x` to the closed region (zero inside).
    pub fn distance_to(&self, x: Vec2) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(x, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Moments {
    pub area: f64,
    pub centroid: Vec2,
    /// Central second moments divided by area (the covariance of the
    /// uniform distribution on the region).
    pub second: Sym2,
}

impl Default for Moments {
    fn default() -> Self {
        Moments {
            area: 0.0,
            centroid: Vec2::ZERO,
            second: Sym2::new(0.0, 0.0, 0.0),
        }
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    let o = v[0];
    let mut a = 0.0;
    for i in 1..n.saturating_sub(1) {
        a += (v[i] - o).cross(v[i + 1] - o);
    }
    a / 2.0
}

fn dedup_cyclic(mut v: Vec<Vec2>) -> Vec<Vec2> {
    v.dedup_by(|b, a| a.dist(*b) <= TOL_GEOM);
    while v.len() > 1 && v[0].dist(v[v.len() - 1]) <= TOL_GEOM {
        v.pop();
    }
    v
}

pub fn point_segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let e = b - a;
    let l2 = e.norm2();
    if l2 == 0.0 {
        return x.dist(a);
    }
    let t = ((x - a).dot(e) / l2).clamp(0.0, 1.0);
    x.dist(a + e * t)
}

/// Clips a convex vertex loop by a half-plane while carrying one label per
/// edge (edge `k` joins vertex `k` to `k + 1`). Edges created by the cut
/// receive `new_label`. Returns an empty loop when nothing survives.
pub(crate) fn clip_labeled<L: Copy>(
    verts: &[Vec2],
    labels: &[L],
    h: &HalfPlane,
    new_label: L,
) -> (Vec<Vec2>, Vec<L>) {
    let n = verts.len();
    let eps = TOL_GEOM * h.normal.norm();
    let s: Vec<f64> = verts.iter().map(|&v| h.eval(v)).collect();
    if s.iter().all(|&x| x <= eps) {
        return (verts.to_vec(), labels.to_vec());
    }
    if s.iter().all(|&x| x > -eps) {
        // Entirely outside, or touching the line without interior.
        if s.iter().all(|&x| x > eps) || s.iter().filter(|&&x| x <= eps).count() < 3 {
            return (Vec::new(), Vec::new());
        }
    }
    let mut out_v = Vec::with_capacity(n + 1);
    let mut out_l = Vec::with_capacity(n + 1);
    for k in 0..n {
        let a = verts[k];
        let b = verts[(k + 1) % n];
        let (sa, sb) = (s[k], s[(k + 1) % n]);
        let a_in = sa <= eps;
        let b_in = sb <= eps;
        if a_in {
            out_v.push(a);
            out_l.push(labels[k]);
            if !b_in {
                let t = (sa / (sa - sb)).clamp(0.0, 1.0);
                out_v.push(a + (b - a) * t);
                out_l.push(new_label);
            }
        } else if b_in {
            let t = (sa / (sa - sb)).clamp(0.0, 1.0);
            out_v.push(a + (b - a) * t);
            out_l.push(labels[k]);
        }
    }
    dedup_labeled(&mut out_v, &mut out_l);
    if out_v.len() < 3 {
        return (Vec::new(), Vec::new());
    }
    (out_v, out_l)
}

/// Drops the first vertex of every coincident pair; the surviving vertex
/// keeps its outgoing edge label.
fn dedup_labeled<L: Copy>(v: &mut Vec<Vec2>, l: &mut Vec<L>) {
    let mut i = 0;
    while v.len() > 1 && i < v.len() {
        let j = (i + 1) % v.len();
        if v[i].dist(v[j]) <= TOL_GEOM {
            v.remove(i);
            l.remove(i);
        } else {
            i += 1;
        }
    }
}

/// Directed distance `sup_{x in p} d(x, q)`, attained at a vertex of `p`.
fn directed_hausdorff(p: &Polygon, q: &Polygon) -> f64 {
    p.vertices()
        .iter()
        .map(|&v| q.distance_to(v))
        .fold(0.0, f64::max)
}

pub fn hausdorff_distance(p: &Polygon, q: &Polygon) -> f64 {
    directed_hausdorff(p, q).max(directed_hausdorff(q, p))
}

/// Tangent cone of `p` at vertex `v`, translated to the origin.
pub fn tangent_cone(p: &Polygon, v: usize) -> Result<Sector, GeomError> {
    let n = p.len();
    if v >= n {
        return Err(GeomError::NotAVertex(v));
    }
    let vs = p.vertices();
    let here = vs[v];
    let next = vs[(v + 1) % n] - here;
    let prev = vs[(v + n - 1) % n] - here;
    let lo = next.angle();
    let mut span = prev.angle() - lo;
    while span <= 0.0 {
        span += 2.0 * std::f64::consts::PI;
    }
    Sector::from_lo_span(lo, span)
}

/// Index of the vertex of `p` nearest to `x`, if within `tol`.
pub fn vertex_index(p: &Polygon, x: Vec2, tol: f64) -> Option<usize> {
    p.vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.dist(x)))
        .filter(|&(_, d)| d <= tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, collinear
/// points dropped.
pub fn convex_hull(points: &[Vec2]) -> Polygon {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.dist(*b) <= TOL_GEOM);
    if pts.len() < 3 {
        return Polygon::empty();
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - b) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    Polygon::from_raw(hull)
}

/// Regular `n`-gon inscribed in the circle of radius `r` about `center`,
/// with a vertex at angle `phase`.
pub fn regular_polygon(center: Vec2, r: f64, n: usize, phase: f64) -> Polygon {
    let v = (0..n)
        .map(|i| {
            let t = phase + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            center + Vec2::from_angle(t) * r
        })
        .collect();
    Polygon::from_raw(v)
}
