use super::{laguerre_diagram, Cell, EdgeLabel, SdotError, TargetCloud};
use crate::convex2d::{Polygon, Vec2, TOL_GEOM};
use crate::measures::{integrate_moments, Density, Quadrature};
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::num::NonZero;

#[derive(Clone, Copy, Debug)]
pub struct SamplingOptions {
    pub lloyd_iters: usize,
    /// Place a fixed site at the origin, which must lie on the boundary of
    /// the target domain.
    pub pin_origin: bool,
    /// Keep sites whose cell meets the domain boundary on that boundary, so
    /// the cloud's hull follows the target's edges instead of sitting half a
    /// spacing inside them.
    pub boundary_sites: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            lloyd_iters: 30,
            pin_origin: false,
            boundary_sites: false,
        }
    }
}

/// `n` sites drawn by rejection sampling from `g′` and relaxed by a fixed
/// number of density-weighted Lloyd steps; each site carries the `g′` mass of
/// its Voronoi cell. A pinned origin counts toward `n` and sits at index 0.
pub fn sample_target(
    domain: &Polygon,
    g: &Density,
    n: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<TargetCloud, SdotError> {
    if n == 0 {
        return Err(SdotError::SamplingFailure("need at least one site".into()));
    }
    if domain.is_empty() {
        return Err(SdotError::SamplingFailure("empty target domain".into()));
    }
    let q = Quadrature::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.bbox();

    let mut gmax: f64 = domain.vertices().iter().map(|&v| g.eval(v)).fold(0.0, f64::max);
    for _ in 0..4096 {
        let x = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
        if domain.contains(x) {
            gmax = gmax.max(g.eval(x));
        }
    }
    if !(gmax > 0.0 && gmax.is_finite()) {
        return Err(SdotError::SamplingFailure("target density vanishes on the domain".into()));
    }
    gmax *= 1.1;

    let pinned = if opts.pin_origin {
        let on_boundary = domain.contains(Vec2::ZERO)
            && domain
                .edges()
                .any(|(a, b)| crate::convex2d::point_segment_distance(Vec2::ZERO, a, b) <= TOL_GEOM);
        if !on_boundary {
            return Err(SdotError::SamplingFailure(
                "pin_origin requires the origin on the target boundary".into(),
            ));
        }
        Some(0)
    } else {
        None
    };

    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    if pinned.is_some() {
        pts.push(Vec2::ZERO);
    }
    let mut attempts = 0usize;
    while pts.len() < n {
        attempts += 1;
        if attempts > 10_000 * n + 100_000 {
            return Err(SdotError::SamplingFailure(format!(
                "rejection sampling produced only {} of {n} sites",
                pts.len()
            )));
        }
        let x = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
        if !domain.contains(x) {
            continue;
        }
        if rng.gen::<f64>() * gmax <= g.eval(x) {
            pts.push(x);
        }
    }

    for _ in 0..opts.lloyd_iters {
        let weights: Vec<f64> = pts.iter().map(|y| y.norm2() / 2.0).collect();
        let diagram = laguerre_diagram(domain, &pts, &weights);
        let moved: Vec<Vec2> = diagram
            .cells
            .par_iter()
            .zip(pts.par_iter())
            .enumerate()
            .map(|(i, (cell, &y))| {
                if Some(i) == pinned || cell.is_empty() {
                    return Ok(y);
                }
                let m = integrate_moments(g, &cell.polygon, &q)?;
                let c = m.centroid().unwrap_or(y);
                Ok(if opts.boundary_sites {
                    onto_boundary(cell, c)
                } else {
                    c
                })
            })
            .collect::<Result<_, SdotError>>()?;
        pts = moved;
    }

    let weights: Vec<f64> = pts.iter().map(|y| y.norm2() / 2.0).collect();
    let diagram = laguerre_diagram(domain, &pts, &weights);
    let masses: Vec<f64> = diagram
        .cells
        .par_iter()
        .map(|c| Ok(integrate_moments(g, &c.polygon, &q)?.mass))
        .collect::<Result<_, SdotError>>()?;
    if let Some((i, m)) = masses.iter().enumerate().find(|(_, m)| !(**m > 0.0)) {
        return Err(SdotError::SamplingFailure(format!(
            "site {i} has Voronoi mass {m:e}; too many sites for the resolvable target"
        )));
    }
    check_distinct(&pts)?;
    let total_mass = masses.iter().sum();
    Ok(TargetCloud {
        points: pts,
        masses,
        total_mass,
        pinned,
    })
}

/// Projection of `c` onto the longest domain-boundary edge of `cell`, or
/// `c` itself for interior cells.
fn onto_boundary(cell: &Cell, c: Vec2) -> Vec2 {
    let edge = cell
        .polygon
        .edges()
        .zip(&cell.labels)
        .filter(|(_, l)| **l == EdgeLabel::Boundary)
        .map(|(e, _)| e)
        .max_by(|x, y| x.0.dist(x.1).total_cmp(&y.0.dist(y.1)));
    match edge {
        Some((a, b)) => {
            let d = b - a;
            let t = ((c - a).dot(d) / d.norm2()).clamp(0.0, 1.0);
            a + d * t
        }
        None => c,
    }
}

pub(crate) fn check_distinct(pts: &[Vec2]) -> Result<(), SdotError> {
    if pts.len() < 2 {
        return Ok(());
    }
    let flat: Vec<[f64; 2]> = pts.iter().map(|p| [p.x, p.y]).collect();
    let tree: ImmutableKdTree<f64, 2> =
        ImmutableKdTree::new_from_slice(&flat).expect("kd-tree construction");
    for (i, p) in flat.iter().enumerate() {
        let r = tree
            .query(p)
            .nearest_n::<SquaredEuclidean<f64>>(NonZero::new(2).expect("2 > 0"))
            .execute();
        for nb in r {
            if nb.item as usize != i && nb.distance.sqrt() <= TOL_GEOM {
                return Err(SdotError::SamplingFailure(format!(
                    "sites {i} and {} coincide",
                    nb.item
                )));
            }
        }
    }
    Ok(())
}
