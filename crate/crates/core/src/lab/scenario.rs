//! Scenario configuration: schema, parsing and validation.

use super::LabError;
use crate::cones;
use crate::convex2d::{vertex_index, Polygon, Vec2, TOL_GEOM};
use crate::measures::{Density, DensityKind};
use crate::regularity::{RegularityParams, Verdict};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

fn default_segments() -> usize {
    32
}

fn default_normal_deg() -> f64 {
    90.0
}

fn default_lloyd() -> usize {
    30
}

fn yes() -> bool {
    true
}

/// A convex polygon. Parametric shapes list their vertices in a fixed
/// counter-clockwise order; `vertex = k` in a base point refers to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolygonSpec {
    /// Explicit counter-clockwise vertices.
    Vertices { vertices: Vec<[f64; 2]> },
    /// Vertex 0 is the lower-left corner.
    Square {
        #[serde(default)]
        center: [f64; 2],
        half_width: f64,
    },
    /// Vertex 0 is `min`.
    Rectangle { min: [f64; 2], max: [f64; 2] },
    /// `{θ ∈ [lo, hi], |x| ≤ radius}` with the arc replaced by `segments`
    /// inscribed chords. Vertex 0 is the apex at the origin.
    Sector {
        lo_deg: f64,
        hi_deg: f64,
        radius: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
    /// `{⟨x, n⟩ ≥ 0, |x| ≤ radius}` for the unit normal at angle
    /// `normal_deg`. Vertex 0 is the origin.
    HalfPlaneCap {
        #[serde(default = "default_normal_deg")]
        normal_deg: f64,
        radius: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
    /// `{|x₁|^{1+β} ≤ x₂ ≤ w^{1+β}}`, whose boundary is `C^{1,β}` at the
    /// origin. Vertex 0 is the origin.
    SmoothedCorner {
        beta: f64,
        half_width: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
}

impl PolygonSpec {
    /// Vertices in the documented order.
    pub fn vertex_list(&self) -> Result<Vec<Vec2>, LabError> {
        let v = |a: [f64; 2]| Vec2::new(a[0], a[1]);
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        Ok(match self {
            PolygonSpec::Vertices { vertices } => vertices.iter().map(|&a| v(a)).collect(),
            PolygonSpec::Square { center, half_width } => {
                if !(*half_width > 0.0) {
                    return bad("square half_width must be positive");
                }
                let (c, w) = (v(*center), *half_width);
                vec![
                    c + Vec2::new(-w, -w),
                    c + Vec2::new(w, -w),
                    c + Vec2::new(w, w),
                    c + Vec2::new(-w, w),
                ]
            }
            PolygonSpec::Rectangle { min, max } => {
                if !(max[0] > min[0] && max[1] > min[1]) {
                    return bad("rectangle needs max > min in both coordinates");
                }
                vec![
                    v(*min),
                    Vec2::new(max[0], min[1]),
                    v(*max),
                    Vec2::new(min[0], max[1]),
                ]
            }
            PolygonSpec::Sector {
                lo_deg,
                hi_deg,
                radius,
                segments,
            } => {
                let span = hi_deg - lo_deg;
                if !(span > 0.0 && span <= 180.0) || !(*radius > 0.0) || *segments == 0 {
                    return bad("sector needs 0 < hi_deg − lo_deg ≤ 180, radius > 0, segments ≥ 1");
                }
                arc_fan(lo_deg.to_radians(), hi_deg.to_radians(), *radius, *segments)
            }
            PolygonSpec::HalfPlaneCap {
                normal_deg,
                radius,
                segments,
            } => {
                if !(*radius > 0.0) || *segments < 2 {
                    return bad("half_plane_cap needs radius > 0 and segments ≥ 2");
                }
                let t = normal_deg.to_radians();
                let half = std::f64::consts::FRAC_PI_2;
                arc_fan(t - half, t + half, *radius, *segments)
            }
            PolygonSpec::SmoothedCorner {
                beta,
                half_width,
                segments,
            } => {
                if !(*beta > 0.0 && *beta <= 1.0) || !(*half_width > 0.0) || *segments < 2 {
                    return bad("smoothed_corner needs 0 < beta ≤ 1, half_width > 0, segments ≥ 2");
                }
                let p = 1.0 + beta;
                let m = *segments;
                let mut out = vec![Vec2::ZERO];
                // Right branch, graded towards the origin.
                for i in 1..=m {
                    let x = half_width * (i as f64 / m as f64).powi(2);
                    out.push(Vec2::new(x, x.powf(p)));
                }
                for i in (1..=m).rev() {
                    let x = half_width * (i as f64 / m as f64).powi(2);
                    out.push(Vec2::new(-x, x.powf(p)));
                }
                out
            }
        })
    }

    pub fn build(&self) -> Result<Polygon, LabError> {
        Polygon::new(self.vertex_list()?).map_err(|e| LabError::Config(format!("polygon: {e}")))
    }
}

/// Apex at the origin followed by `segments + 1` points on the arc.
fn arc_fan(lo: f64, hi: f64, r: f64, segments: usize) -> Vec<Vec2> {
    let mut v = vec![Vec2::ZERO];
    for i in 0..=segments {
        v.push(Vec2::from_angle(lo + (hi - lo) * i as f64 / segments as f64) * r);
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(default = "default_lloyd")]
    pub lloyd_iters: usize,
    /// Keep boundary sites on the target's edges.
    #[serde(default = "yes")]
    pub boundary_sites: bool,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            lloyd_iters: default_lloyd(),
            boundary_sites: true,
        }
    }
}

/// A base point given by a source vertex or by coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePointSpec {
    #[serde(default)]
    pub vertex: Option<usize>,
    #[serde(default)]
    pub point: Option<[f64; 2]>,
    /// Pin a target site at the origin so that `∇u(x0) = 0` is imposed.
    #[serde(default)]
    pub pin_origin: bool,
    /// Replaces the scenario-level expectations for this point.
    #[serde(default)]
    pub expected: Option<Expected>,
}

/// Per-diagnostic overrides of the scenario's regularity parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub slope_tol: Option<f64>,
    pub ecc_cap: Option<f64>,
    pub slack: Option<f64>,
    pub min_cells: Option<usize>,
    pub h_max_fraction: Option<f64>,
    pub chi_a: Option<f64>,
    pub chi_eps0: Option<f64>,
}

impl ParamOverrides {
    pub fn apply(&self, base: &RegularityParams) -> RegularityParams {
        let mut p = base.clone();
        if let Some(v) = self.slope_tol {
            p.slope_tol = v;
        }
        if let Some(v) = self.ecc_cap {
            p.ecc_cap = v;
        }
        if let Some(v) = self.slack {
            p.slack = v;
        }
        if let Some(v) = self.min_cells {
            p.min_cells = v;
        }
        if let Some(v) = self.h_max_fraction {
            p.h_max_fraction = v;
        }
        if self.chi_a.is_some() {
            p.chi_a = self.chi_a;
        }
        if self.chi_eps0.is_some() {
            p.chi_eps0 = self.chi_eps0;
        }
        p
    }
}

fn default_radii() -> usize {
    20
}

fn default_sandwich_radii() -> usize {
    10
}

fn default_heights() -> usize {
    12
}

fn default_blowups() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiagnosticSpec {
    /// `χ(r)` at geometric radii in the trusted window. `l` and `k` default
    /// to the homogeneity degrees of the two densities.
    Chi {
        #[serde(default = "default_radii")]
        radii: usize,
        #[serde(default)]
        l: Option<f64>,
        #[serde(default)]
        k: Option<f64>,
        #[serde(default)]
        params: ParamOverrides,
    },
    /// Sandwich defects of extrinsic balls against sections.
    Sections {
        #[serde(default = "default_sandwich_radii")]
        radii: usize,
        #[serde(default)]
        params: ParamOverrides,
    },
    /// Centered-section profile, axis fits and verdict; optionally the
    /// dual-side proxy profile.
    Roundness {
        #[serde(default = "default_heights")]
        heights: usize,
        #[serde(default)]
        predicted_beta: Option<f64>,
        #[serde(default)]
        proxy: bool,
        #[serde(default)]
        params: ParamOverrides,
    },
    /// Tangent cones of source at the base point and of target at
    /// `target_vertex` (default the origin), classified.
    Classify {
        #[serde(default)]
        target_vertex: Option<[f64; 2]>,
    },
    /// Normalized blow-ups at the smallest trusted heights.
    Blowup {
        #[serde(default = "default_blowups")]
        heights: usize,
        #[serde(default)]
        params: ParamOverrides,
    },
    Obliqueness {
        #[serde(default)]
        target_vertex: Option<[f64; 2]>,
    },
}

impl DiagnosticSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticSpec::Chi { .. } => "chi",
            DiagnosticSpec::Sections { .. } => "sections",
            DiagnosticSpec::Roundness { .. } => "roundness",
            DiagnosticSpec::Classify { .. } => "classify",
            DiagnosticSpec::Blowup { .. } => "blowup",
            DiagnosticSpec::Obliqueness { .. } => "obliqueness",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeExpectation {
    pub major: f64,
    pub minor: f64,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleExpectation {
    /// Expected major-axis direction in degrees, taken modulo 180.
    pub deg: f64,
    pub tol_deg: f64,
}

/// Assertions checked against the diagnostics of one base point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub roundness: Option<Verdict>,
    pub cone: Option<cones::Verdict>,
    /// The roundness verdict is ROUND exactly when the cone pair admits a
    /// homogeneous quadratic map.
    #[serde(default)]
    pub verdict_matches_classify: bool,
    pub section_slopes: Option<SlopeExpectation>,
    pub proxy_slopes: Option<SlopeExpectation>,
    pub max_eccentricity: Option<f64>,
    pub major_angle: Option<AngleExpectation>,
    pub max_chi_violations: Option<usize>,
    /// Bound on both sandwich defects relative to the section area.
    pub max_sandwich_defect: Option<f64>,
    pub min_obliqueness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    /// Number of target sites `N`.
    pub sites: usize,
    pub source: PolygonSpec,
    pub target: PolygonSpec,
    pub source_density: DensityKind,
    pub target_density: DensityKind,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub params: RegularityParams,
    pub base_points: Vec<BasePointSpec>,
    pub diagnostics: Vec<DiagnosticSpec>,
    #[serde(default)]
    pub expected: Expected,
}

/// A validated scenario with its geometry built.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub source: Polygon,
    pub target: Polygon,
    pub source_density: Density,
    pub target_density: Density,
    pub base_points: Vec<Vec2>,
    pub pin_origin: bool,
}

impl Scenario {
    /// Parses TOML; errors carry the line, column and offending key.
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        let s: Scenario = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        s.resolve()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String, LabError> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<Resolved, LabError> {
        let err = |m: String| LabError::Config(format!("scenario '{}': {m}", self.name));
        if self.name.trim().is_empty() {
            return Err(LabError::Config("scenario name must not be empty".into()));
        }
        if self.sites == 0 {
            return Err(err("sites must be at least 1".into()));
        }
        if self.base_points.is_empty() {
            return Err(err("at least one base point is required".into()));
        }
        let source = self.source.build().map_err(|e| err(format!("source {e}")))?;
        let target = self.target.build().map_err(|e| err(format!("target {e}")))?;
        let source_density =
            Density::new(self.source_density.clone()).map_err(|e| err(format!("source_density: {e}")))?;
        let target_density =
            Density::new(self.target_density.clone()).map_err(|e| err(format!("target_density: {e}")))?;
        let listed = self.source.vertex_list()?;
        let tol = TOL_GEOM * source.diameter().max(1.0);
        let mut base_points = Vec::new();
        for (i, b) in self.base_points.iter().enumerate() {
            let x = match (b.vertex, b.point) {
                (Some(k), None) => {
                    let v = *listed.get(k).ok_or_else(|| {
                        err(format!(
                            "base point {i}: vertex {k} does not exist (source has {} vertices)",
                            listed.len()
                        ))
                    })?;
                    if vertex_index(&source, v, tol).is_none() {
                        return Err(err(format!("base point {i}: vertex {k} was merged away")));
                    }
                    v
                }
                (None, Some(p)) => {
                    let x = Vec2::new(p[0], p[1]);
                    if !(x.is_finite() && source.contains(x)) {
                        return Err(err(format!("base point {i}: ({}, {}) is not in the source", p[0], p[1])));
                    }
                    x
                }
                _ => return Err(err(format!("base point {i}: give exactly one of vertex or point"))),
            };
            base_points.push(x);
        }
        let mut seen = HashSet::new();
        for d in &self.diagnostics {
            if !seen.insert(d.name()) {
                return Err(err(format!("diagnostic '{}' is listed twice", d.name())));
            }
            let count = match d {
                DiagnosticSpec::Chi { radii, .. } | DiagnosticSpec::Sections { radii, .. } => *radii,
                DiagnosticSpec::Roundness { heights, .. } => *heights,
                DiagnosticSpec::Blowup { heights, .. } => *heights,
                _ => 2,
            };
            if count < 2 {
                return Err(err(format!("diagnostic '{}' needs at least 2 samples", d.name())));
            }
        }
        let pin_origin = self.base_points.iter().any(|b| b.pin_origin);
        if pin_origin && vertex_index(&target, Vec2::ZERO, tol).is_none() {
            let on_edge = target
                .edges()
                .any(|(a, b)| crate::convex2d::point_segment_distance(Vec2::ZERO, a, b) <= tol);
            if !on_edge {
                return Err(err("pin_origin requires the origin on the target boundary".into()));
            }
        }
        Ok(Resolved {
            source,
            target,
            source_density,
            target_density,
            base_points,
            pin_origin,
        })
    }

    /// Expectations in force at base point `i`.
    pub fn expected_at(&self, i: usize) -> &Expected {
        self.base_points[i].expected.as_ref().unwrap_or(&self.expected)
    }
}
