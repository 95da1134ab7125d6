use super::{GeomError, Polygon, Vec2, TOL_GEOM};
use serde::{Deserialize, Serialize};

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a: 1.0, b: 0.0, c: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Sym2 { a, b, c }
    }

    pub fn diag(a: f64, c: f64) -> Self {
        Sym2::new(a, 0.0, c)
    }

    /// `v vᵀ`.
    pub fn outer(v: Vec2) -> Self {
        Sym2::new(v.x * v.x, v.x * v.y, v.y * v.y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.b * v.x + self.c * v.y)
    }

    pub fn quad(&self, v: Vec2) -> f64 {
        v.dot(self.mul_vec(v))
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.a * s, self.b * s, self.c * s)
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Sym2::new(self.c / d, -self.b / d, self.a / d))
    }

    /// Eigenvalues in ascending order with the unit eigenvector of the
    /// larger one.
    pub fn eigen(&self) -> (f64, f64, Vec2) {
        let m = (self.a + self.c) / 2.0;
        let r = ((self.a - self.c) / 2.0).hypot(self.b);
        let hi = m + r;
        let lo = m - r;
        let v = if r == 0.0 {
            Vec2::new(1.0, 0.0)
        } else if self.a >= self.c {
            Vec2::new(self.a - lo, self.b).normalized()
        } else {
            Vec2::new(self.b, self.c - lo).normalized()
        };
        (lo, hi, v)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.det() > 0.0
    }

    /// Principal square root of a positive semi-definite matrix.
    pub fn sqrt(&self) -> Sym2 {
        // For 2×2 SPD: √M = (M + √det I) / √(tr M + 2√det).
        let s = self.det().max(0.0).sqrt();
        let t = (self.trace() + 2.0 * s).sqrt();
        Sym2::new((self.a + s) / t, self.b / t, (self.c + s) / t)
    }

    pub fn max_abs_diff(&self, o: &Sym2) -> f64 {
        (self.a - o.a)
            .abs()
            .max((self.b - o.b).abs())
            .max((self.c - o.c).abs())
    }
}

/// The region `{x : (x − center)ᵀ shape (x − center) ≤ 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Vec2,
    pub shape: Sym2,
}

impl Ellipse {
    /// Semi-axis lengths `(major, minor)`.
    pub fn axes(&self) -> (f64, f64) {
        let (lo, hi, _) = self.shape.eigen();
        (1.0 / lo.sqrt(), 1.0 / hi.sqrt())
    }

    /// Unit direction of the major axis.
    pub fn major_direction(&self) -> Vec2 {
        let (_, _, v_hi) = self.shape.eigen();
        v_hi.perp()
    }

    pub fn eccentricity(&self) -> f64 {
        let (a, b) = self.axes();
        a / b
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI / self.shape.det().sqrt()
    }

    pub fn level(&self, x: Vec2) -> f64 {
        self.shape.quad(x - self.center)
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.level(x) <= 1.0 + TOL_GEOM
    }

    /// Polygonal approximation with `n` vertices on the boundary.
    pub fn to_polygon(&self, n: usize) -> Polygon {
        let (a, b) = self.axes();
        let d = self.major_direction();
        let e = d.perp();
        let v = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                self.center + d * (a * t.cos()) + e * (b * t.sin())
            })
            .collect();
        Polygon::from_raw(v)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LownerOptions {
    /// Relative optimality gap of the Khachiyan dual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LownerOptions {
    fn default() -> Self {
        LownerOptions {
            tol: 1e-6,
            max_iter: 1_000_000,
        }
    }
}

/// Minimum-area ellipse containing the vertices of `p`.
pub fn lowner_ellipse(p: &Polygon) -> Result<Ellipse, GeomError> {
    lowner_ellipse_of_points(p.vertices(), &LownerOptions::default())
}

/// Khachiyan's algorithm with Todd–Yildirim away steps on the lifted points
/// `(x, 1)`. The final shape is inflated so every point lies inside.
pub fn lowner_ellipse_of_points(pts: &[Vec2], opts: &LownerOptions) -> Result<Ellipse, GeomError> {
    let m = pts.len();
    if m < 3 {
        return Err(GeomError::DegenerateRegion(0.0));
    }
    // Work in coordinates centered at the mean for conditioning.
    let mean = pts.iter().fold(Vec2::ZERO, |s, &p| s + p) / m as f64;
    let q: Vec<Vec2> = pts.iter().map(|&p| p - mean).collect();
    let scale = q.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(GeomError::DegenerateRegion(0.0));
    }
    let q: Vec<Vec2> = q.into_iter().map(|v| v / scale).collect();

    const D1: f64 = 3.0; // lifted dimension d + 1
    let mut u = vec![1.0 / m as f64; m];
    let mut lev = vec![0.0; m];
    let mut iter = 0;
    loop {
        let (c, cov) = weighted_moments(&q, &u);
        let inv = match cov.inverse() {
            Some(i) if cov.det() > 1e-300 => i,
            _ => return Err(GeomError::DegenerateRegion(cov.det())),
        };
        for (l, &p) in lev.iter_mut().zip(&q) {
            *l = 1.0 + inv.quad(p - c);
        }
        let (j, &mj) = lev
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let (k, &mk) = lev
            .iter()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let up = mj / D1 - 1.0;
        let down = 1.0 - mk / D1;
        let gap = up.max(down);
        if gap <= opts.tol {
            break;
        }
        if iter >= opts.max_iter {
            return Err(GeomError::EllipseNonConvergence {
                iterations: iter,
                error: gap,
            });
        }
        iter += 1;
        if up >= down {
            let step = (mj - D1) / (D1 * (mj - 1.0));
            for w in u.iter_mut() {
                *w *= 1.0 - step;
            }
            u[j] += step;
        } else {
            // Away step, clipped so the weight stays non-negative.
            let mut step = (mk - D1) / (D1 * (mk - 1.0));
            let floor = -u[k] / (1.0 - u[k]);
            if step < floor {
                step = floor;
            }
            for w in u.iter_mut() {
                *w *= 1.0 - step;
            }
            u[k] += step;
            if u[k] < 0.0 {
                u[k] = 0.0;
            }
        }
    }
    let (c, cov) = weighted_moments(&q, &u);
    let mut shape = cov
        .inverse()
        .ok_or(GeomError::DegenerateRegion(cov.det()))?
        .scale(0.5);
    let worst = q.iter().map(|&p| shape.quad(p - c)).fold(0.0, f64::max);
    if worst > 1.0 {
        shape = shape.scale(1.0 / worst);
    }
    Ok(Ellipse {
        center: mean + c * scale,
        shape: shape.scale(1.0 / (scale * scale)),
    })
}

fn weighted_moments(q: &[Vec2], u: &[f64]) -> (Vec2, Sym2) {
    let mut c = Vec2::ZERO;
    let mut s = Sym2::new(0.0, 0.0, 0.0);
    for (&p, &w) in q.iter().zip(u) {
        c += p * w;
        s = s.add(&Sym2::outer(p).scale(w));
    }
    (c, s.sub(&Sym2::outer(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_and_sqrt() {
        let m = Sym2::new(2.0, 1.0, 2.0);
        let (lo, hi, v) = m.eigen();
        assert_relative_eq!(lo, 1.0, epsilon = 1e-14);
        assert_relative_eq!(hi, 3.0, epsilon = 1e-14);
        assert_relative_eq!(v.x.abs(), 0.5f64.sqrt(), epsilon = 1e-14);
        let r = m.sqrt();
        let back = Sym2::new(
            r.a * r.a + r.b * r.b,
            r.a * r.b + r.b * r.c,
            r.b * r.b + r.c * r.c,
        );
        assert!(back.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn square_gives_circumdisk() {
        let sq = Polygon::rectangle(-1.0, -1.0, 1.0, 1.0).unwrap();
        let e = lowner_ellipse(&sq).unwrap();
        let (a, b) = e.axes();
        assert_relative_eq!(a, 2f64.sqrt(), epsilon = 1e-8);
        assert_relative_eq!(b, 2f64.sqrt(), epsilon = 1e-8);
        assert!(e.center.norm() < 1e-10);
    }

    #[test]
    fn rectangle_matches_grid_search() {
        let r = Polygon::rectangle(-2.0, -1.0, 2.0, 1.0).unwrap();
        let e = lowner_ellipse(&r).unwrap();
        // Oracle: grid over semi-axis a; the tightest b keeping (2,1) inside
        // is b = a / sqrt(a² − 4); minimize a·b.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut a: f64 = 2.0005;
        while a < 6.0 {
            let b = a / (a * a - 4.0).sqrt();
            if a * b < best.0 {
                best = (a * b, a, b);
            }
            a += 1e-5;
        }
        let (ma, mb) = e.axes();
        assert!((ma - best.1).abs() < 1e-3, "{ma} vs {}", best.1);
        assert!((mb - best.2).abs() < 1e-3, "{mb} vs {}", best.2);
        assert_relative_eq!(ma, 2.0 * 2f64.sqrt(), epsilon = 1e-7);
        assert_relative_eq!(mb, 2f64.sqrt(), epsilon = 1e-7);
    }

    #[test]
    fn equilateral_triangle_gives_circumcircle() {
        let t = super::super::regular_polygon(Vec2::new(0.3, -0.2), 1.5, 3, 0.4);
        let e = lowner_ellipse(&t).unwrap();
        let (a, b) = e.axes();
        assert_relative_eq!(a, 1.5, epsilon = 1e-7);
        assert_relative_eq!(b, 1.5, epsilon = 1e-7);
        assert!(e.center.dist(Vec2::new(0.3, -0.2)) < 1e-8);
    }

    #[test]
    fn contains_vertices_and_exceeds_area() {
        let p = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.2),
            Vec2::new(3.5, 1.0),
            Vec2::new(0.5, 0.9),
        ])
        .unwrap();
        let e = lowner_ellipse(&p).unwrap();
        for &v in p.vertices() {
            assert!(e.contains(v));
        }
        assert!(e.area() >= p.area());
    }
}
