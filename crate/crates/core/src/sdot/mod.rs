//! Semi-discrete optimal transport: target sampling, Laguerre diagrams, the
//! damped Newton dual solver and the resulting piecewise-linear Brenier
//! potential.

mod laguerre;
mod sample;
mod solve;

pub use laguerre::{laguerre_diagram, Cell, Diagram, EdgeLabel};
pub use sample::{sample_target, SamplingOptions};
pub use solve::{cell_masses, hessian_entries, solve, SolveOptions, TOL_MASS};

use crate::convex2d::{GeomError, Polygon, Vec2};
use crate::measures::{integrate_weighted, Density, MeasureError, Quadrature};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdotError {
    #[error("sampling failed: {0}")]
    SamplingFailure(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Hessian: {0}")]
    SingularHessian(String),
    #[error("mass imbalance: source {source_mass:e} vs target {target_mass:e}")]
    MassImbalance { source_mass: f64, target_mass: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("plan file: {0}")]
    Persist(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCloud {
    pub points: Vec<Vec2>,
    pub masses: Vec<f64>,
    pub total_mass: f64,
    /// Index of a site fixed at the origin, if any.
    #[serde(default)]
    pub pinned: Option<usize>,
}

impl TargetCloud {
    /// Cloud with equal masses summing to `total_mass`.
    pub fn equal_masses(points: Vec<Vec2>, total_mass: f64) -> Self {
        let n = points.len();
        TargetCloud {
            masses: vec![total_mass / n as f64; n],
            points,
            total_mass,
            pinned: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverMeta {
    pub iterations: usize,
    pub residual: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub newton_tol: f64,
}

/// A solved semi-discrete plan: the discrete Brenier potential
/// `u(x) = max_i(⟨x, y_i⟩ − ψ_i)` together with its Laguerre cells.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub source: Polygon,
    pub source_density: Density,
    pub cloud: TargetCloud,
    pub weights: Vec<f64>,
    pub diagram: Diagram,
    pub meta: SolverMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDocument {
    format: String,
    version: u32,
    source: Polygon,
    source_density: Density,
    cloud: TargetCloud,
    weights: Vec<f64>,
    meta: SolverMeta,
}

const PLAN_FORMAT: &str = "otlab-plan";
const PLAN_VERSION: u32 = 1;

/// Value of the discrete potential at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialValue {
    pub u: f64,
    pub gradient: Vec2,
    pub cell: usize,
}

/// One entry of the discrete Legendre dual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualEntry {
    pub y: Vec2,
    pub v: f64,
    /// False when the site's cell is empty; `v` is then only an upper
    /// bound for the conjugate.
    pub active: bool,
}

impl TransportPlan {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sites(&self) -> &[Vec2] {
        &self.cloud.points
    }

    /// `u(x) = max_i(⟨x, y_i⟩ − ψ_i)`, defined on the whole plane; ties go to
    /// the lowest index.
    pub fn potential_eval(&self, x: Vec2) -> PotentialValue {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, (y, psi)) in self.cloud.points.iter().zip(&self.weights).enumerate() {
            let v = x.dot(*y) - psi;
            if v > best {
                best = v;
                arg = i;
            }
        }
        PotentialValue {
            u: best,
            gradient: self.cloud.points[arg],
            cell: arg,
        }
    }

    /// Fenchel–Young pairs `(y_i, v_i = ψ_i)`.
    pub fn legendre_dual(&self) -> Vec<DualEntry> {
        self.cloud
            .points
            .iter()
            .zip(&self.weights)
            .zip(&self.diagram.cells)
            .map(|((y, psi), c)| DualEntry {
                y: *y,
                v: *psi,
                active: !c.is_empty(),
            })
            .collect()
    }

    pub fn cell_masses(&self) -> Result<Vec<f64>, SdotError> {
        cell_masses(&self.source_density, &self.diagram, &Quadrature::default())
    }

    /// `Σ_i ∫_{cell_i} |x − y_i|² g(x) dx`.
    pub fn transport_cost(&self) -> Result<f64, SdotError> {
        let q = Quadrature::default();
        let parts: Vec<f64> = self
            .diagram
            .cells
            .par_iter()
            .zip(self.cloud.points.par_iter())
            .map(|(c, &y)| Ok(integrate_weighted(&self.source_density, &c.polygon, &q, |x| (x - y).norm2())?))
            .collect::<Result<_, SdotError>>()?;
        Ok(parts.iter().sum())
    }

    /// Oscillation `max u − min u` over the source domain (attained at cell
    /// vertices since `u` is affine on cells).
    pub fn oscillation(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, c) in self.diagram.cells.iter().enumerate() {
            for &v in c.polygon.vertices() {
                let u = v.dot(self.cloud.points[i]) - self.weights[i];
                lo = lo.min(u);
                hi = hi.max(u);
            }
        }
        hi - lo
    }

    pub fn to_json(&self) -> Result<String, SdotError> {
        let doc = PlanDocument {
            format: PLAN_FORMAT.into(),
            version: PLAN_VERSION,
            source: self.source.clone(),
            source_density: self.source_density.clone(),
            cloud: self.cloud.clone(),
            weights: self.weights.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| SdotError::Persist(e.to_string()))
    }

    /// Parses a plan document and rebuilds its Laguerre diagram.
    pub fn from_json(text: &str) -> Result<Self, SdotError> {
        let doc: PlanDocument = serde_json::from_str(text).map_err(|e| SdotError::Persist(e.to_string()))?;
        if doc.format != PLAN_FORMAT || doc.version != PLAN_VERSION {
            return Err(SdotError::Persist(format!(
                "unsupported document {} v{}",
                doc.format, doc.version
            )));
        }
        if doc.weights.len() != doc.cloud.points.len() || doc.cloud.masses.len() != doc.cloud.points.len() {
            return Err(SdotError::Persist("length mismatch between sites, masses and weights".into()));
        }
        doc.source_density.validate()?;
        let diagram = laguerre_diagram(&doc.source, &doc.cloud.points, &doc.weights);
        Ok(TransportPlan {
            source: doc.source,
            source_density: doc.source_density,
            cloud: doc.cloud,
            weights: doc.weights,
            diagram,
            meta: doc.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SdotError> {
        std::fs::write(path, self.to_json()?).map_err(|e| SdotError::Persist(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, SdotError> {
        let text = std::fs::read_to_string(path).map_err(|e| SdotError::Persist(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
