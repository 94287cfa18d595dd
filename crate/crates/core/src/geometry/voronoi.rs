//! Voronoi cells bounded by a rectangle, by successive half-plane clipping.
//!
//! O(N²) per tessellation, which is fine for the few dozen generators a
//! follower team has.

use super::{GeometryError, Polygon, Rect, Vec2, TOL};

/// What produced an edge of a clipped cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    /// Part of the rectangle boundary.
    Boundary,
    /// Part of the bisector with this generator.
    Generator(usize),
}

/// A Voronoi cell whose edge `k` runs from `vertices[k]` to `vertices[k + 1]`
/// and was produced by `sources[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCell {
    pub vertices: Vec<Vec2>,
    pub sources: Vec<EdgeSource>,
}

impl LabeledCell {
    fn from_rect(domain: &Rect) -> Self {
        Self { vertices: domain.corners().to_vec(), sources: vec![EdgeSource::Boundary; 4] }
    }

    pub fn polygon(&self) -> Polygon {
        Polygon { vertices: self.vertices.clone() }
    }

    /// Generators sharing an edge longer than the shared-edge tolerance, sorted.
    pub fn neighbors(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut out: Vec<usize> = (0..n)
            .filter_map(|k| match self.sources[k] {
                EdgeSource::Generator(j)
                    if self.vertices[k].distance(self.vertices[(k + 1) % n]) > TOL.shared_edge_epsilon =>
                {
                    Some(j)
                }
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Keeps the part where `(q - mid) · normal <= 0`; new edges get `label`.
    fn clip(&mut self, mid: Vec2, normal: Vec2, label: EdgeSource) {
        let n = self.vertices.len();
        if n == 0 {
            return;
        }
        let side: Vec<f64> = self.vertices.iter().map(|&q| (q - mid).dot(normal)).collect();
        if side.iter().all(|&s| s <= 0.0) {
            return;
        }
        let mut verts = Vec::with_capacity(n + 1);
        let mut srcs = Vec::with_capacity(n + 1);
        for k in 0..n {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
            let (fa, fb) = (side[k], side[(k + 1) % n]);
            let a_in = fa <= 0.0;
            let b_in = fb <= 0.0;
            if a_in {
                verts.push(a);
                if b_in {
                    srcs.push(self.sources[k]);
                } else {
                    srcs.push(self.sources[k]);
                    verts.push(a.lerp(b, fa / (fa - fb)));
                    srcs.push(label);
                }
            } else if b_in {
                verts.push(a.lerp(b, fa / (fa - fb)));
                srcs.push(self.sources[k]);
            }
        }
        self.vertices = verts;
        self.sources = srcs;
        self.drop_repeated_vertices();
    }

    fn drop_repeated_vertices(&mut self) {
        let mut k = 0;
        while self.vertices.len() > 1 && k < self.vertices.len() {
            let next = (k + 1) % self.vertices.len();
            if self.vertices[k].distance(self.vertices[next]) <= 1e-15 {
                // the edge starting at k has zero length; the previous edge now
                // ends at `next` and keeps its own label
                self.vertices.remove(k);
                self.sources.remove(k);
            } else {
                k += 1;
            }
        }
    }
}

fn validate(points: &[Vec2], domain: &Rect) -> Result<(), GeometryError> {
    for (i, p) in points.iter().enumerate() {
        if !p.is_finite() || !domain.contains(*p, TOL.coincident_epsilon) {
            return Err(GeometryError::GeneratorOutsideDomain { index: i, x: p.x, y: p.y });
        }
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i].distance(points[j]) <= TOL.coincident_epsilon {
                return Err(GeometryError::CoincidentGenerators(i, j));
            }
        }
    }
    Ok(())
}

fn clip_cell(points: &[Vec2], i: usize, domain: &Rect) -> LabeledCell {
    let mut cell = LabeledCell::from_rect(domain);
    let p = points[i];
    for (j, &q) in points.iter().enumerate() {
        if j != i {
            cell.clip((p + q) * 0.5, q - p, EdgeSource::Generator(j));
        }
    }
    cell
}

/// Cell `i` of the bounded tessellation, with edge provenance.
pub fn bounded_voronoi_cell(points: &[Vec2], i: usize, domain: &Rect) -> Result<LabeledCell, GeometryError> {
    validate(points, domain)?;
    Ok(clip_cell(points, i, domain))
}

/// All cells of the bounded tessellation, with edge provenance.
pub(crate) fn labeled_voronoi(points: &[Vec2], domain: &Rect) -> Result<Vec<LabeledCell>, GeometryError> {
    validate(points, domain)?;
    Ok((0..points.len()).map(|i| clip_cell(points, i, domain)).collect())
}

/// Unchecked single-cell variant for finite-difference loops where the
/// generator set is known to be valid up to a tiny perturbation.
pub(crate) fn labeled_cell_unchecked(points: &[Vec2], i: usize, domain: &Rect) -> LabeledCell {
    clip_cell(points, i, domain)
}

/// Voronoi cells of `points` clipped to `domain`; cell `i` belongs to `points[i]`.
pub fn bounded_voronoi(points: &[Vec2], domain: &Rect) -> Result<Vec<Polygon>, GeometryError> {
    Ok(labeled_voronoi(points, domain)?.iter().map(LabeledCell::polygon).collect())
}

/// Adjacency lists: `i` and `j` are neighbors when their cells share a boundary
/// segment longer than the shared-edge tolerance. Purely geometric, no
/// generator information is used.
pub fn voronoi_neighbors(cells: &[Polygon]) -> Vec<Vec<usize>> {
    let n = cells.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if share_segment(&cells[i], &cells[j]) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

fn share_segment(a: &Polygon, b: &Polygon) -> bool {
    const ON_LINE: f64 = 1e-9;
    for (p0, p1) in a.edges() {
        let dir = p1 - p0;
        let len = dir.norm();
        if len <= TOL.shared_edge_epsilon {
            continue;
        }
        let u = dir / len;
        for (q0, q1) in b.edges() {
            if u.cross(q0 - p0).abs() > ON_LINE || u.cross(q1 - p0).abs() > ON_LINE {
                continue;
            }
            let (t0, t1) = (u.dot(q0 - p0), u.dot(q1 - p0));
            let overlap = len.min(t0.max(t1)) - 0.0f64.max(t0.min(t1));
            if overlap > TOL.shared_edge_epsilon {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{polygon_area, polygon_centroid};

    fn unit() -> Rect {
        Rect::new(Vec2::ZERO, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_generator_owns_the_domain() {
        let cells = bounded_voronoi(&[Vec2::new(0.2, 0.9)], &unit()).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(polygon_area(&cells[0]), 1.0);
        assert!(voronoi_neighbors(&cells)[0].is_empty());
    }

    #[test]
    fn two_generators_split_in_halves() {
        let pts = [Vec2::new(0.25, 0.5), Vec2::new(0.75, 0.5)];
        let cells = bounded_voronoi(&pts, &unit()).unwrap();
        assert!((polygon_area(&cells[0]) - 0.5).abs() < 1e-15);
        assert!((polygon_area(&cells[1]) - 0.5).abs() < 1e-15);
        assert!((polygon_centroid(&cells[0]).unwrap() - Vec2::new(0.25, 0.5)).norm() < 1e-15);
        assert!((polygon_centroid(&cells[1]).unwrap() - Vec2::new(0.75, 0.5)).norm() < 1e-15);
        assert_eq!(voronoi_neighbors(&cells), vec![vec![1], vec![0]]);
    }

    #[test]
    fn collinear_generators_chain() {
        let pts = [Vec2::new(0.1, 0.5), Vec2::new(0.5, 0.5), Vec2::new(0.9, 0.5)];
        let cells = bounded_voronoi(&pts, &unit()).unwrap();
        assert_eq!(voronoi_neighbors(&cells), vec![vec![1], vec![0, 2], vec![1]]);
    }

    #[test]
    fn rejects_bad_generators() {
        let r = unit();
        assert!(matches!(
            bounded_voronoi(&[Vec2::new(0.5, 0.5), Vec2::new(0.5, 0.5)], &r),
            Err(GeometryError::CoincidentGenerators(0, 1))
        ));
        assert!(matches!(
            bounded_voronoi(&[Vec2::new(1.5, 0.5)], &r),
            Err(GeometryError::GeneratorOutsideDomain { index: 0, .. })
        ));
    }

    #[test]
    fn labels_agree_with_geometric_adjacency() {
        let pts = [
            Vec2::new(0.1, 0.2),
            Vec2::new(0.7, 0.1),
            Vec2::new(0.4, 0.5),
            Vec2::new(0.9, 0.8),
            Vec2::new(0.2, 0.85),
            Vec2::new(0.55, 0.75),
        ];
        let labeled = labeled_voronoi(&pts, &unit()).unwrap();
        let polys: Vec<Polygon> = labeled.iter().map(LabeledCell::polygon).collect();
        let geo = voronoi_neighbors(&polys);
        for (i, cell) in labeled.iter().enumerate() {
            assert_eq!(cell.neighbors(), geo[i], "cell {i}");
        }
    }
}
