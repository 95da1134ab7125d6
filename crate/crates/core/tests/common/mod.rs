//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use otlab::convex2d::{Polygon, Vec2};
use otlab::measures::Density;
use otlab::sdot::{cell_masses, hessian_entries, laguerre_diagram, solve, SolveOptions, TargetCloud, TransportPlan};
use ndarray::Array2;
use rand::Rng;

pub const SITE_COUNTS: [usize; 6] = [2, 4, 8, 16, 32, 64];

pub fn unit_square() -> Polygon {
    Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
}

pub fn random_sites(rng: &mut impl Rng, n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|_| Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
        .collect()
}

/// Optimal cost of moving the uniform unit square onto equal masses at
/// `sites` when every grid cell must go to a single site. The cost of a
/// cell with center `c` and side `h` sent to `y` is `h²(|c − y|² + h²/6)`,
/// exact for the square cell. Restricting to whole cells can only raise the
/// cost, so this is an upper bound converging to the semi-discrete optimum.
///
/// The gap shrinks like `h²`; the grid grows with the site count so every
/// site receives at least 64 cells.
pub fn assignment_cost(sites: &[Vec2]) -> f64 {
    let grid = match sites.len() {
        0..=16 => 32,
        17..=32 => 48,
        _ => 64,
    };
    assignment_cost_on(sites, grid)
}

pub fn assignment_cost_on(sites: &[Vec2], grid: usize) -> f64 {
    let m = grid * grid;
    assert_eq!(m % sites.len(), 0, "grid must split evenly among the sites");
    let copies = m / sites.len();
    let h = 1.0 / grid as f64;
    let centers: Vec<Vec2> = (0..m)
        .map(|k| Vec2::new(((k % grid) as f64 + 0.5) * h, ((k / grid) as f64 + 0.5) * h))
        .collect();
    let cost = Array2::from_shape_fn((m, m), |(k, slot)| {
        let y = sites[slot / copies];
        h * h * ((centers[k] - y).norm2() + h * h / 6.0)
    });
    let (rows, _) = lapjv::lapjv(&cost).unwrap();
    rows.iter().enumerate().map(|(k, &slot)| cost[(k, slot)]).sum()
}

pub fn solve_equal_masses(sites: &[Vec2]) -> TransportPlan {
    let cloud = TargetCloud::equal_masses(sites.to_vec(), 1.0);
    solve(&unit_square(), &Density::uniform(1.0), &cloud, None, &SolveOptions::default()).unwrap()
}

/// Largest entry of `|J − J_fd|` relative to the largest `|J|`, where `J` is
/// the mass Jacobian assembled from `hessian_entries` and `J_fd` its central
/// difference approximation in every weight.
pub fn hessian_fd_error(plan: &TransportPlan) -> f64 {
    let n = plan.len();
    let g = &plan.source_density;
    let q = SolveOptions::default().quadrature;
    let mut j = vec![vec![0.0; n]; n];
    for (a, b, h) in hessian_entries(g, plan.sites(), &plan.diagram, q.tol).unwrap() {
        j[a][b] += h;
        j[b][a] += h;
        j[a][a] -= h;
        j[b][b] -= h;
    }
    let eps = 1e-6;
    let masses = |w: &[f64]| cell_masses(g, &laguerre_diagram(&plan.source, plan.sites(), w), &q).unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for col in 0..n {
        let mut up = plan.weights.clone();
        let mut down = plan.weights.clone();
        up[col] += eps;
        down[col] -= eps;
        let (mu, md) = (masses(&up), masses(&down));
        for row in 0..n {
            let fd = (mu[row] - md[row]) / (2.0 * eps);
            worst = worst.max((fd - j[row][col]).abs());
            scale = scale.max(j[row][col].abs());
        }
    }
    worst / scale
}
