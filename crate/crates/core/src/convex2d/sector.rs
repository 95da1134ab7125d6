use super::{GeomError, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tolerance for angular comparisons (radians).
pub const ANGLE_TOL: f64 = 1e-9;

const TAU: f64 = 2.0 * PI;

/// Maps an angle into (−π, π].
pub fn normalize_angle(t: f64) -> f64 {
    let mut r = t.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Signed difference `a − b` reduced to (−π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// A planar cone with apex at the origin: all directions swept
/// counter-clockwise from `theta_lo` through `span` radians. A span of zero
/// is a single ray (the dual of a half-plane).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    theta_lo: f64,
    span: f64,
}

impl Sector {
    /// Sector from `lo` counter-clockwise to `hi`; `hi` may be given
    /// unnormalized, e.g. `[−π/3, π/3]` or `[5π/6, 7π/6]`.
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeomError> {
        Sector::from_lo_span(lo, hi - lo)
    }

    pub fn from_degrees(lo: f64, hi: f64) -> Result<Self, GeomError> {
        Sector::new(lo.to_radians(), hi.to_radians())
    }

    pub fn from_lo_span(lo: f64, span: f64) -> Result<Self, GeomError> {
        if !lo.is_finite() || !span.is_finite() {
            return Err(GeomError::InvalidSector("non-finite angle".into()));
        }
        if span < -ANGLE_TOL || span > TAU + ANGLE_TOL {
            return Err(GeomError::InvalidSector(format!(
                "span {span} outside [0, 2pi]"
            )));
        }
        Ok(Sector {
            theta_lo: normalize_angle(lo),
            span: span.clamp(0.0, TAU),
        })
    }

    pub fn theta_lo(&self) -> f64 {
        self.theta_lo
    }

    /// Upper angle `theta_lo + span`; lies in (−π, 3π].
    pub fn theta_hi(&self) -> f64 {
        self.theta_lo + self.span
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    /// Contains no full line.
    pub fn is_strict(&self) -> bool {
        self.span < PI - ANGLE_TOL
    }

    pub fn is_half_plane(&self) -> bool {
        (self.span - PI).abs() <= ANGLE_TOL
    }

    pub fn lo_ray(&self) -> Vec2 {
        Vec2::from_angle(self.theta_lo)
    }

    pub fn hi_ray(&self) -> Vec2 {
        Vec2::from_angle(self.theta_hi())
    }

    pub fn bisector(&self) -> Vec2 {
        Vec2::from_angle(self.theta_lo + self.span / 2.0)
    }

    /// Counter-clockwise offset of direction `theta` from `theta_lo`, in
    /// [0, 2π).
    fn offset(&self, theta: f64) -> f64 {
        (theta - self.theta_lo).rem_euclid(TAU)
    }

    /// Closed membership of a direction, with angular tolerance.
    pub fn contains_direction(&self, theta: f64) -> bool {
        let o = self.offset(theta);
        o <= self.span + ANGLE_TOL || o >= TAU - ANGLE_TOL
    }

    pub fn contains_point(&self, x: Vec2) -> bool {
        x.norm() == 0.0 || self.contains_direction(x.angle())
    }

    /// `closure(self) ∖ {0} ⊂ interior(other)`, requiring clearance larger
    /// than `ANGLE_TOL` on both sides.
    pub fn strictly_inside(&self, other: &Sector) -> bool {
        if other.span >= TAU - ANGLE_TOL {
            return true;
        }
        let o = other.offset(self.theta_lo);
        // Offsets just below 2π mean self starts clockwise of other.
        o > ANGLE_TOL && o + self.span < other.span - ANGLE_TOL
    }

    pub fn approx_eq(&self, other: &Sector) -> bool {
        (self.span - other.span).abs() <= ANGLE_TOL
            && (self.span >= TAU - ANGLE_TOL
                || angle_diff(self.theta_lo, other.theta_lo).abs() <= ANGLE_TOL)
    }

    /// `C° = {y : ⟨x, y⟩ ≥ 0 for all x ∈ C}`, defined for spans ≤ π.
    pub fn dual_cone(&self) -> Result<Sector, GeomError> {
        if self.span > PI + ANGLE_TOL {
            return Err(GeomError::NotDualizable(self.span));
        }
        let span = self.span.min(PI);
        Sector::from_lo_span(self.theta_hi() - PI / 2.0, PI - span)
    }

    /// Image under an orientation-preserving linear map `[[a, b], [c, d]]`.
    pub fn mapped(&self, m: [[f64; 2]; 2]) -> Result<Sector, GeomError> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det > 0.0) {
            return Err(GeomError::InvalidSector(
                "map must preserve orientation".into(),
            ));
        }
        let apply = |v: Vec2| Vec2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y);
        let lo = apply(self.lo_ray()).angle();
        if self.span >= TAU - ANGLE_TOL {
            return Sector::from_lo_span(lo, TAU);
        }
        if self.span <= ANGLE_TOL {
            return Sector::from_lo_span(lo, 0.0);
        }
        let hi = apply(self.hi_ray()).angle();
        let mut span = (hi - lo).rem_euclid(TAU);
        if self.is_half_plane() {
            span = PI;
        }
        Sector::from_lo_span(lo, span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(3.0 * PI / 2.0), -PI / 2.0);
    }

    #[test]
    fn quadrant_is_self_dual() {
        let q = Sector::new(0.0, PI / 2.0).unwrap();
        let d = q.dual_cone().unwrap();
        assert!(d.approx_eq(&q), "{d:?}");
    }

    #[test]
    fn dual_of_120_degree_sector() {
        let s = Sector::new(-PI / 3.0, PI / 3.0).unwrap();
        let d = s.dual_cone().unwrap();
        assert_relative_eq!(d.theta_lo(), -PI / 6.0, epsilon = 1e-15);
        assert_relative_eq!(d.span(), PI / 3.0, epsilon = 1e-15);
        // Inner-product oracle over a grid of ray pairs.
        for i in 0..=40 {
            let x = Vec2::from_angle(s.theta_lo() + s.span() * i as f64 / 40.0);
            for j in 0..=40 {
                let y = Vec2::from_angle(d.theta_lo() + d.span() * j as f64 / 40.0);
                assert!(x.dot(y) >= -1e-12);
            }
        }
    }

    #[test]
    fn dual_of_half_plane_is_ray() {
        let h = Sector::new(0.0, PI).unwrap();
        let d = h.dual_cone().unwrap();
        assert_eq!(d.span(), 0.0);
        assert_relative_eq!(d.theta_lo(), PI / 2.0, epsilon = 1e-15);
        assert!(matches!(
            Sector::new(0.0, 1.5 * PI).unwrap().dual_cone(),
            Err(GeomError::NotDualizable(_))
        ));
    }

    #[test]
    fn strict_containment() {
        let outer = Sector::from_degrees(0.0, 90.0).unwrap();
        assert!(Sector::from_degrees(20.0, 70.0).unwrap().strictly_inside(&outer));
        assert!(!Sector::from_degrees(0.0, 70.0).unwrap().strictly_inside(&outer));
        assert!(!Sector::from_degrees(-30.0, 60.0).unwrap().strictly_inside(&outer));
        // Wrap-around across ±π.
        let back = Sector::from_degrees(150.0, 210.0).unwrap();
        assert!(Sector::from_degrees(170.0, 190.0).unwrap().strictly_inside(&back));
    }

    #[test]
    fn mapped_preserves_inclusion() {
        let s = Sector::from_degrees(10.0, 80.0).unwrap();
        let m = [[2.0, 1.0], [0.5, 1.0]];
        let t = s.mapped(m).unwrap();
        let apply = |v: Vec2| Vec2::new(2.0 * v.x + v.y, 0.5 * v.x + v.y);
        for i in 0..=10 {
            let th = s.theta_lo() + s.span() * i as f64 / 10.0;
            assert!(t.contains_direction(apply(Vec2::from_angle(th)).angle()));
        }
    }
}
