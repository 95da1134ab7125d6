//! Damped Newton on the semi-discrete Kantorovich dual.

use super::{laguerre_diagram, Diagram, SdotError, SolverMeta, TargetCloud, TransportPlan};
use crate::convex2d::{Polygon, Vec2};
use crate::measures::{integrate, integrate_moments, integrate_segment, Density, Quadrature};
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative mismatch between source and target mass tolerated by `solve`
/// before the target masses are rescaled to match exactly.
pub const TOL_MASS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Stop when every `|mass_i − ν_i| ≤ newton_tol·ν_i`.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    /// Clouds at most this large are initialised directly instead of from a
    /// coarser solve.
    pub cascade_min: usize,
    #[serde(skip)]
    pub quadrature: Quadrature,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            newton_tol: 1e-7,
            max_newton: 100,
            max_halvings: 20,
            cascade_min: 64,
            quadrature: Quadrature::default(),
        }
    }
}

pub fn cell_masses(g: &Density, diagram: &Diagram, q: &Quadrature) -> Result<Vec<f64>, SdotError> {
    diagram
        .cells
        .par_iter()
        .map(|c| Ok(integrate(g, &c.polygon, q)?))
        .collect()
}

/// Off-diagonal Hessian entries `H_ij = ∫_{cell_i ∩ cell_j} g / |y_i − y_j|`
/// for `i < j`, averaged over the two cells' copies of the shared edge.
pub fn hessian_entries(
    g: &Density,
    sites: &[Vec2],
    diagram: &Diagram,
    tol: f64,
) -> Result<Vec<(usize, usize, f64)>, SdotError> {
    let per_cell: Vec<Vec<(usize, usize, f64)>> = diagram
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut out = Vec::new();
            for (j, a, b) in cell.neighbor_edges() {
                let len_g = integrate_segment(g, a, b, tol)?;
                let h = len_g / sites[i].dist(sites[j]);
                out.push((i.min(j), i.max(j), h));
            }
            Ok(out)
        })
        .collect::<Result<_, SdotError>>()?;
    let mut all: Vec<(usize, usize, f64)> = per_cell.into_iter().flatten().collect();
    all.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(all.len() / 2 + 1);
    let mut k = 0;
    while k < all.len() {
        let (i, j, _) = all[k];
        let mut sum = 0.0;
        let mut cnt = 0.0;
        while k < all.len() && all[k].0 == i && all[k].1 == j {
            sum += all[k].2;
            cnt += 1.0;
            k += 1;
        }
        // Each shared edge appears once per side; a pair that appears on one
        // side only has a vanishing counterpart, so halve the lone copy.
        let v = if cnt >= 2.0 { sum / cnt } else { sum / 2.0 };
        if v > 0.0 {
            merged.push((i, j, v));
        }
    }
    Ok(merged)
}

/// `A = −H` with the pinned row and column removed, stored by rows.
struct Reduced {
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    pin: usize,
}

impl Reduced {
    fn new(n: usize, pin: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut diag = vec![0.0; n];
        let mut rows = vec![Vec::new(); n];
        for &(i, j, h) in entries {
            diag[i] += h;
            diag[j] += h;
            rows[i].push((j, h));
            rows[j].push((i, h));
        }
        Reduced { diag, rows, pin }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            if i == self.pin {
                *o = 0.0;
                return;
            }
            let mut s = self.diag[i] * x[i];
            for &(j, h) in &self.rows[i] {
                if j != self.pin {
                    s -= h * x[j];
                }
            }
            *o = s;
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for `A x = b` on the
/// non-pinned coordinates.
fn conjugate_gradient(a: &Reduced, b: &[f64]) -> Result<Vec<f64>, SdotError> {
    let n = b.len();
    for i in 0..n {
        if i != a.pin && !(a.diag[i] > 0.0) {
            return Err(SdotError::SingularHessian(format!(
                "site {i} has no neighbours in the diagram"
            )));
        }
    }
    let inv: Vec<f64> = (0..n)
        .map(|i| if i == a.pin { 0.0 } else { 1.0 / a.diag[i] })
        .collect();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = b.to_vec();
    r[a.pin] = 0.0;
    let bnorm = dot(&r, &r).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 10 * n + 200;
    for _ in 0..max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SdotError::SingularHessian("Hessian is not definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= 1e-11 * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if dot(&r, &r).sqrt() <= 1e-6 * bnorm {
        return Ok(x);
    }
    Err(SdotError::SingularHessian(
        "conjugate gradients did not converge".into(),
    ))
}

pub(crate) struct NewtonOut {
    pub psi: Vec<f64>,
    pub diagram: Diagram,
    pub iterations: usize,
}

/// Largest relative mass error over the cells other than `pin`. The pinned
/// equation follows from the others; what remains there is the gap between
/// the quadrature of the whole source and the sum over the cells.
fn max_rel_error(masses: &[f64], nu: &[f64], pin: usize) -> f64 {
    masses
        .iter()
        .zip(nu)
        .enumerate()
        .filter(|(i, _)| *i != pin)
        .map(|(_, (m, n))| (m - n).abs() / n)
        .fold(0.0, f64::max)
}

struct Problem<'a> {
    source: &'a Polygon,
    g: &'a Density,
    sites: &'a [Vec2],
    nu: &'a [f64],
    pin: usize,
    opts: &'a SolveOptions,
}

impl Problem<'_> {
    fn mass_defect(&self, masses: &[f64]) -> Vec<f64> {
        let mut f: Vec<f64> = masses.iter().zip(self.nu).map(|(m, v)| m - v).collect();
        f[self.pin] = 0.0;
        f
    }

    fn evaluate(&self, psi: &[f64]) -> Result<(Diagram, Vec<f64>), SdotError> {
        let d = laguerre_diagram(self.source, self.sites, psi);
        let m = cell_masses(self.g, &d, &self.opts.quadrature)?;
        Ok((d, m))
    }

    /// Damped Newton with the step acceptance rule of Kitagawa, Mérigot and
    /// Thibert: halve until every cell keeps mass ≥ ε₀ and the residual
    /// norm shrinks by the factor (1 − τ/2).
    fn newton(&self, psi0: Vec<f64>) -> Result<NewtonOut, SdotError> {
        let n = self.sites.len();
        let mut psi = psi0;
        let (mut diagram, mut masses) = self.evaluate(&psi)?;
        let min_nu = self.nu.iter().copied().fold(f64::INFINITY, f64::min);
        let min_m0 = masses.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_m0 > 0.0) {
            return Err(SdotError::SingularHessian(
                "initial weights leave an empty cell".into(),
            ));
        }
        let eps0 = 0.5 * min_nu.min(min_m0);
        let mut f = self.mass_defect(&masses);
        let mut fnorm = dot(&f, &f).sqrt();
        let mut iterations = 0;
        loop {
            let residual = max_rel_error(&masses, self.nu, self.pin);
            if residual <= self.opts.newton_tol {
                return Ok(NewtonOut {
                    psi,
                    diagram,
                    iterations,
                });
            }
            if iterations >= self.opts.max_newton {
                return Err(SdotError::NonConvergence {
                    iterations,
                    residual,
                });
            }
            iterations += 1;
            let entries = hessian_entries(self.g, self.sites, &diagram, self.opts.quadrature.tol)?;
            let a = Reduced::new(n, self.pin, &entries);
            let delta = conjugate_gradient(&a, &f)?;
            let mut tau = 1.0;
            let mut accepted = false;
            for _ in 0..=self.opts.max_halvings {
                let trial: Vec<f64> = psi.iter().zip(&delta).map(|(p, d)| p + tau * d).collect();
                let (d2, m2) = self.evaluate(&trial)?;
                let min_m = m2.iter().copied().fold(f64::INFINITY, f64::min);
                let f2 = self.mass_defect(&m2);
                let f2norm = dot(&f2, &f2).sqrt();
                if min_m >= eps0 && f2norm <= (1.0 - tau / 2.0) * fnorm {
                    psi = trial;
                    diagram = d2;
                    masses = m2;
                    f = f2;
                    fnorm = f2norm;
                    accepted = true;
                    break;
                }
                tau /= 2.0;
            }
            if !accepted {
                return Err(SdotError::NonConvergence {
                    iterations,
                    residual: max_rel_error(&masses, self.nu, self.pin),
                });
            }
        }
    }

    /// Weights making each cell the pull-back of the Voronoi cell of `y_i`
    /// under the similarity matching the spreads of source and target.
    fn affine_init(&self) -> Result<Vec<f64>, SdotError> {
        let sm = integrate_moments(self.g, self.source, &self.opts.quadrature)?;
        let mx = sm.centroid().unwrap_or(Vec2::ZERO);
        let m = self.source.moments();
        let var_x = m.second.trace() + (m.centroid - mx).norm2();
        let total: f64 = self.nu.iter().sum();
        let my = self
            .sites
            .iter()
            .zip(self.nu)
            .fold(Vec2::ZERO, |s, (y, v)| s + *y * *v)
            / total;
        let var_y = self
            .sites
            .iter()
            .zip(self.nu)
            .map(|(y, v)| (*y - my).norm2() * v)
            .sum::<f64>()
            / total;
        let s = if var_x > 0.0 && var_y > 0.0 {
            (var_y / var_x).sqrt()
        } else {
            1.0
        };
        let b = my - mx * s;
        Ok(self
            .sites
            .iter()
            .map(|y| (y.norm2() / 2.0 - b.dot(*y)) / s)
            .collect())
    }

    /// Raises empty cells by placing each at the diagram vertex where its
    /// affine function comes closest to the current potential.
    fn fix_empties(&self, mut psi: Vec<f64>) -> Result<Vec<f64>, SdotError> {
        let source_area = self.source.area();
        let total: f64 = self.nu.iter().sum();
        let gbar = total / source_area;
        for _ in 0..20 {
            let (d, masses) = self.evaluate(&psi)?;
            let empties: Vec<usize> = (0..masses.len()).filter(|&i| !(masses[i] > 0.0)).collect();
            if empties.is_empty() {
                return Ok(psi);
            }
            let mut verts: Vec<(Vec2, f64, usize)> = Vec::new();
            for (j, c) in d.cells.iter().enumerate() {
                for &v in c.polygon.vertices() {
                    verts.push((v, v.dot(self.sites[j]) - psi[j], j));
                }
            }
            for &i in &empties {
                let yi = self.sites[i];
                let Some(&(v, u, j)) = verts
                    .iter()
                    .max_by(|a, b| (a.0.dot(yi) - a.1).total_cmp(&(b.0.dot(yi) - b.1)))
                else {
                    break;
                };
                let size = (self.nu[i] / gbar).sqrt();
                let margin = 0.25 * size * yi.dist(self.sites[j]).max(1e-12);
                psi[i] = v.dot(yi) - u - margin;
            }
        }
        Ok(psi)
    }

    /// Weights from the solution of a four-times coarser subproblem.
    fn cascade_init(&self) -> Result<Vec<f64>, SdotError> {
        let n = self.sites.len();
        if n <= self.opts.cascade_min.max(2) {
            return self.affine_init();
        }
        let coarse_idx: Vec<usize> = (0..n).filter(|&i| i % 4 == 0 || i == self.pin).collect();
        let cpin = coarse_idx.iter().position(|&i| i == self.pin).expect("pin kept");
        let csites: Vec<Vec2> = coarse_idx.iter().map(|&i| self.sites[i]).collect();
        let flat: Vec<[f64; 2]> = csites.iter().map(|p| [p.x, p.y]).collect();
        let tree: ImmutableKdTree<f64, 2> =
            ImmutableKdTree::new_from_slice(&flat).expect("kd-tree construction");
        let owner: Vec<usize> = self
            .sites
            .iter()
            .map(|y| {
                tree.query(&[y.x, y.y])
                    .nearest_one::<SquaredEuclidean<f64>>()
                    .execute()
                    .item as usize
            })
            .collect();
        let mut cnu = vec![0.0; csites.len()];
        let mut msd = vec![0.0; csites.len()];
        let mut cnt = vec![0usize; csites.len()];
        for (i, &p) in owner.iter().enumerate() {
            cnu[p] += self.nu[i];
            msd[p] += (self.sites[i] - csites[p]).norm2();
            cnt[p] += 1;
        }
        let coarse = Problem {
            source: self.source,
            g: self.g,
            sites: &csites,
            nu: &cnu,
            pin: cpin,
            opts: self.opts,
        };
        let sol = coarse.solve()?;
        let mut kappa: Vec<f64> = (0..csites.len())
            .map(|p| {
                let area = sol.diagram.cells[p].polygon.area();
                let m = msd[p] / cnt[p].max(1) as f64;
                if m > 0.0 && area > 0.0 {
                    (area / (2.0 * std::f64::consts::PI * m)).sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect();
        let mut finite: Vec<f64> = kappa.iter().copied().filter(|k| k.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let median = finite.get(finite.len() / 2).copied().unwrap_or(1.0);
        for k in kappa.iter_mut() {
            if !k.is_finite() {
                *k = median;
            }
        }
        let centroids: Vec<Vec2> = sol
            .diagram
            .cells
            .iter()
            .map(|c| c.polygon.moments().centroid)
            .collect();
        Ok(self
            .sites
            .iter()
            .zip(&owner)
            .map(|(y, &p)| {
                let d = *y - csites[p];
                sol.psi[p] + centroids[p].dot(d) + 0.5 * kappa[p] * d.norm2()
            })
            .collect())
    }

    fn solve(&self) -> Result<NewtonOut, SdotError> {
        let init = self.cascade_init()?;
        let init = self.fix_empties(init)?;
        self.newton(init)
    }
}

pub fn solve(
    source: &Polygon,
    g: &Density,
    cloud: &TargetCloud,
    init_weights: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<TransportPlan, SdotError> {
    let n = cloud.points.len();
    if n == 0 || cloud.masses.len() != n {
        return Err(SdotError::InvalidInput(
            "cloud needs one positive mass per point".into(),
        ));
    }
    if cloud.masses.iter().any(|m| !(*m > 0.0)) {
        return Err(SdotError::InvalidInput("target masses must be positive".into()));
    }
    if let Some(w) = init_weights {
        if w.len() != n || w.iter().any(|x| !x.is_finite()) {
            return Err(SdotError::InvalidInput(
                "initial weights must be finite, one per point".into(),
            ));
        }
    }
    let mu = integrate(g, source, &opts.quadrature)?;
    let total: f64 = cloud.masses.iter().sum();
    if !(mu > 0.0) || (total - mu).abs() > TOL_MASS * mu {
        return Err(SdotError::MassImbalance {
            source_mass: mu,
            target_mass: total,
        });
    }
    let nu: Vec<f64> = cloud.masses.iter().map(|m| m * mu / total).collect();
    let pin = cloud.pinned.unwrap_or(0);
    if pin >= n {
        return Err(SdotError::InvalidInput(format!("pinned index {pin} out of range")));
    }
    let problem = Problem {
        source,
        g,
        sites: &cloud.points,
        nu: &nu,
        pin,
        opts,
    };
    let out = if n == 1 {
        let (diagram, _) = problem.evaluate(&[0.0])?;
        NewtonOut {
            psi: vec![0.0],
            diagram,
            iterations: 0,
        }
    } else {
        match init_weights {
            Some(w) => {
                let init = problem.fix_empties(w.to_vec())?;
                problem.newton(init)?
            }
            None => problem.solve()?,
        }
    };
    let shift = out.psi[pin];
    let weights: Vec<f64> = out.psi.iter().map(|p| p - shift).collect();
    // Rebuild from the stored weights so a reloaded plan reproduces the
    // diagram bit for bit; the gauge shift can move cell vertices by an ulp.
    let (diagram, masses) = problem.evaluate(&weights)?;
    let residual = max_rel_error(&masses, &nu, pin);
    let mut cloud = cloud.clone();
    cloud.masses = nu;
    cloud.total_mass = mu;
    Ok(TransportPlan {
        source: source.clone(),
        source_density: g.clone(),
        cloud,
        weights,
        diagram,
        meta: SolverMeta {
            iterations: out.iterations,
            residual,
            seed: None,
            newton_tol: opts.newton_tol,
        },
    })
}
