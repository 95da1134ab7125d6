//! Laguerre (power) cells restricted to a convex source polygon.

use crate::convex2d::{clip_labeled, HalfPlane, Polygon, Vec2};
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::num::NonZero;

/// What lies across an edge of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLabel {
    /// The source domain boundary.
    Boundary,
    /// The cell of site `j`.
    Site(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub polygon: Polygon,
    /// `labels[k]` describes the edge from vertex `k` to vertex `k + 1`.
    pub labels: Vec<EdgeLabel>,
}

impl Cell {
    pub fn is_empty(&self) -> bool {
        self.polygon.is_empty()
    }

    /// Edges shared with other cells: `(j, a, b)`.
    pub fn neighbor_edges(&self) -> impl Iterator<Item = (usize, Vec2, Vec2)> + '_ {
        self.polygon
            .edges()
            .zip(&self.labels)
            .filter_map(|((a, b), l)| match l {
                EdgeLabel::Site(j) => Some((*j as usize, a, b)),
                EdgeLabel::Boundary => None,
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagram {
    pub cells: Vec<Cell>,
}

impl Diagram {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn polygons(&self) -> impl Iterator<Item = &Polygon> {
        self.cells.iter().map(|c| &c.polygon)
    }
}

/// `cell_i = source ∩ ⋂_{j≠i} {x : ⟨x, y_j − y_i⟩ ≤ ψ_j − ψ_i}`.
///
/// Each cell is first clipped by its nearest sites in the target. The result
/// is accepted once every shared edge is reported identically by both cells
/// and the cell areas add up to the source area; since each candidate cell
/// contains the true one, a consistent tiling is the diagram. Cells that
/// fail are retried with their two-ring in the current diagram and more
/// nearest sites, and finally against every site.
pub fn laguerre_diagram(source: &Polygon, sites: &[Vec2], weights: &[f64]) -> Diagram {
    assert_eq!(sites.len(), weights.len(), "one weight per site");
    let n = sites.len();
    let boundary_labels = vec![EdgeLabel::Boundary; source.len()];
    if n == 0 {
        return Diagram { cells: Vec::new() };
    }
    if n == 1 {
        return Diagram {
            cells: vec![Cell {
                polygon: source.clone(),
                labels: boundary_labels,
            }],
        };
    }
    let ctx = Context {
        source,
        boundary_labels,
        sites,
        weights,
    };
    let flat: Vec<[f64; 2]> = sites.iter().map(|p| [p.x, p.y]).collect();
    let tree: ImmutableKdTree<f64, 2> =
        ImmutableKdTree::new_from_slice(&flat).expect("kd-tree construction");
    let knn = |i: usize, k: usize| -> Vec<usize> {
        tree.query(&flat[i])
            .nearest_n::<SquaredEuclidean<f64>>(NonZero::new(k.min(n)).expect("k > 0"))
            .execute()
            .into_iter()
            .map(|nb| nb.item as usize)
            .filter(|&j| j != i)
            .collect()
    };

    let mut k = 12;
    let mut cells: Vec<Cell> = (0..n)
        .into_par_iter()
        .map(|i| ctx.clip_by(i, &knn(i, k)))
        .collect();
    let scale = source.diameter().max(1.0);
    let mut bad = inconsistent_cells(&cells, scale);
    for _ in 0..4 {
        if bad.is_empty() {
            break;
        }
        k *= 2;
        let redo: Vec<(usize, Cell)> = bad
            .par_iter()
            .map(|&i| {
                let mut cand = knn(i, k);
                for (j, _, _) in cells[i].neighbor_edges() {
                    cand.push(j);
                    cand.extend(cells[j].neighbor_edges().map(|e| e.0));
                }
                cand.sort_unstable_by(|a, b| {
                    (sites[*a] - sites[i])
                        .norm2()
                        .total_cmp(&(sites[*b] - sites[i]).norm2())
                        .then(a.cmp(b))
                });
                cand.dedup();
                cand.retain(|&j| j != i);
                (i, ctx.clip_by(i, &cand))
            })
            .collect();
        for (i, c) in redo {
            cells[i] = c;
        }
        bad = inconsistent_cells(&cells, scale);
    }
    let area: f64 = cells.iter().map(|c| c.polygon.area()).sum();
    if !bad.is_empty() || (area - source.area()).abs() > 1e-9 * source.area() {
        let redo: Vec<usize> = if bad.is_empty() { (0..n).collect() } else { bad };
        let fixed: Vec<(usize, Cell)> = redo.par_iter().map(|&i| (i, ctx.exhaustive(i, &cells[i]))).collect();
        for (i, c) in fixed {
            cells[i] = c;
        }
        let area: f64 = cells.iter().map(|c| c.polygon.area()).sum();
        if (area - source.area()).abs() > 1e-9 * source.area() {
            cells = (0..n)
                .into_par_iter()
                .map(|i| ctx.exhaustive(i, &cells[i]))
                .collect();
        }
    }
    Diagram { cells }
}

struct Context<'a> {
    source: &'a Polygon,
    boundary_labels: Vec<EdgeLabel>,
    sites: &'a [Vec2],
    weights: &'a [f64],
}

impl Context<'_> {
    fn clip_one(&self, i: usize, j: usize, verts: &mut Vec<Vec2>, labels: &mut Vec<EdgeLabel>) {
        let normal = self.sites[j] - self.sites[i];
        if normal.norm2() == 0.0 || verts.is_empty() {
            return;
        }
        let h = HalfPlane {
            normal,
            offset: self.weights[j] - self.weights[i],
        };
        let (v, l) = clip_labeled(verts, labels, &h, EdgeLabel::Site(j as u32));
        *verts = v;
        *labels = l;
    }

    fn clip_by(&self, i: usize, cand: &[usize]) -> Cell {
        let mut verts = self.source.vertices().to_vec();
        let mut labels = self.boundary_labels.clone();
        for &j in cand {
            self.clip_one(i, j, &mut verts, &mut labels);
            if verts.is_empty() {
                break;
            }
        }
        finish(verts, labels)
    }

    /// Clips by every site, starting with the neighbours of a previous
    /// attempt so that the polygon is small for the bulk of the pass.
    fn exhaustive(&self, i: usize, previous: &Cell) -> Cell {
        let mut verts = self.source.vertices().to_vec();
        let mut labels = self.boundary_labels.clone();
        let first: Vec<usize> = previous.neighbor_edges().map(|e| e.0).collect();
        for j in first.into_iter().chain(0..self.sites.len()) {
            if j != i {
                self.clip_one(i, j, &mut verts, &mut labels);
                if verts.is_empty() {
                    break;
                }
            }
        }
        finish(verts, labels)
    }
}

/// Cells whose shared edges are not mirrored by the neighbour, together
/// with those neighbours. Edges shorter than the matching tolerance are
/// skipped.
fn inconsistent_cells(cells: &[Cell], scale: f64) -> Vec<usize> {
    let tol = 1e-8 * scale;
    let mut bad: Vec<usize> = cells
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, c)| {
            c.neighbor_edges()
                .filter(|(_, a, b)| a.dist(*b) > tol)
                .filter(|&(j, a, b)| {
                    !cells[j].neighbor_edges().any(|(k, c2, d2)| {
                        k == i && c2.dist(b) <= tol && d2.dist(a) <= tol
                    })
                })
                .flat_map(|(j, _, _)| [i, j])
                .collect::<Vec<_>>()
        })
        .collect();
    bad.sort_unstable();
    bad.dedup();
    bad
}

fn finish(verts: Vec<Vec2>, labels: Vec<EdgeLabel>) -> Cell {
    if verts.len() < 3 {
        return Cell {
            polygon: Polygon::empty(),
            labels: Vec::new(),
        };
    }
    Cell {
        polygon: Polygon::from_raw(verts),
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_sites_equal_weights_split_evenly() {
        let sq = Polygon::rectangle(-2.0, -2.0, 2.0, 2.0).unwrap();
        let d = laguerre_diagram(&sq, &[Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)], &[0.0, 0.0]);
        assert_relative_eq!(d.cells[0].polygon.area(), 8.0, epsilon = 1e-14);
        assert_relative_eq!(d.cells[1].polygon.area(), 8.0, epsilon = 1e-14);
    }

    #[test]
    fn two_sites_shifted_bisector() {
        let sq = Polygon::rectangle(-2.0, -2.0, 2.0, 2.0).unwrap();
        // Sites ordered (1,0), (−1,0) with weights (0, 0.4): the boundary is
        // ⟨x, (2,0)⟩ = −0.4, i.e. x = −0.2.
        let d = laguerre_diagram(&sq, &[Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)], &[0.0, 0.4]);
        let (lo, _) = d.cells[0].polygon.bbox();
        assert_relative_eq!(lo.x, -0.2, epsilon = 1e-14);
        // Brute-force classification of grid points.
        for a in -19..=19 {
            for b in -19..=19 {
                let x = Vec2::new(a as f64 * 0.1 + 0.003, b as f64 * 0.1);
                let owner = if x.x > -0.2 { 0 } else { 1 };
                let v0 = x.dot(Vec2::new(1.0, 0.0));
                let v1 = x.dot(Vec2::new(-1.0, 0.0)) - 0.4;
                assert_eq!(owner, if v0 >= v1 { 0 } else { 1 });
                assert!(d.cells[owner].polygon.contains(x));
            }
        }
    }

    #[test]
    fn one_site_is_whole_domain() {
        let sq = Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = laguerre_diagram(&sq, &[Vec2::new(3.0, 3.0)], &[7.0]);
        assert_eq!(d.cells[0].polygon, sq);
    }

    #[test]
    fn matches_brute_force_and_tiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sq = Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let n = 300;
        let sites: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
        let weights: Vec<f64> = sites.iter().map(|y| y.norm2() / 2.0 + rng.gen_range(-0.01..0.01)).collect();
        let d = laguerre_diagram(&sq, &sites, &weights);
        let total: f64 = d.polygons().map(|p| p.area()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        for _ in 0..2000 {
            let x = Vec2::new(rng.gen(), rng.gen());
            let best = (0..n)
                .max_by(|&a, &b| {
                    (x.dot(sites[a]) - weights[a]).total_cmp(&(x.dot(sites[b]) - weights[b]))
                })
                .unwrap();
            assert!(d.cells[best].polygon.contains(x));
        }
    }

    #[test]
    fn far_from_voronoi_matches_exhaustive_clipping() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tri = Polygon::new(vec![Vec2::new(-1.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 1.5)]).unwrap();
        let n = 800;
        let sites: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
        // Strongly non-uniform power weights leave many cells empty.
        let weights: Vec<f64> = sites
            .iter()
            .map(|y| 0.2 * y.norm2() + 0.3 * y.x * y.y + rng.gen_range(-0.02..0.02))
            .collect();
        let d = laguerre_diagram(&tri, &sites, &weights);
        let ctx = Context {
            source: &tri,
            boundary_labels: vec![EdgeLabel::Boundary; tri.len()],
            sites: &sites,
            weights: &weights,
        };
        let mut empty = 0;
        for i in 0..n {
            let e = ctx.exhaustive(i, &Cell { polygon: Polygon::empty(), labels: Vec::new() });
            assert!((e.polygon.area() - d.cells[i].polygon.area()).abs() < 1e-13, "cell {i}");
            empty += e.is_empty() as usize;
        }
        assert!(empty > 50, "{empty}");
        let total: f64 = d.polygons().map(|p| p.area()).sum();
        assert_relative_eq!(total, tri.area(), epsilon = 1e-12);
    }
}
