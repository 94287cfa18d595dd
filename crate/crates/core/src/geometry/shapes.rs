use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec2, TOL};

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_corner: Vec2,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn new(min_corner: Vec2, width: f64, height: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::BadRect { width, height });
        }
        Ok(Self { min_corner, width, height })
    }

    pub fn max_corner(&self) -> Vec2 {
        self.min_corner + Vec2::new(self.width, self.height)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Vec2 {
        self.min_corner + Vec2::new(0.5 * self.width, 0.5 * self.height)
    }

    /// Corners in counterclockwise order starting at `min_corner`.
    pub fn corners(&self) -> [Vec2; 4] {
        let a = self.min_corner;
        let b = self.max_corner();
        [a, Vec2::new(b.x, a.y), b, Vec2::new(a.x, b.y)]
    }

    pub fn contains(&self, p: Vec2, slack: f64) -> bool {
        let b = self.max_corner();
        p.x >= self.min_corner.x - slack
            && p.x <= b.x + slack
            && p.y >= self.min_corner.y - slack
            && p.y <= b.y + slack
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        let b = self.max_corner();
        Vec2::new(p.x.clamp(self.min_corner.x, b.x), p.y.clamp(self.min_corner.y, b.y))
    }

    pub fn max_dim(&self) -> f64 {
        self.width.max(self.height)
    }
}

/// Simple polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        Ok(Self { vertices })
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    pub fn centroid(&self) -> Result<Vec2, GeometryError> {
        polygon_centroid(self)
    }

    /// Iterator over directed edges `(v[i], v[i+1])`, closing the loop.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Inside-or-on test for a convex counterclockwise polygon.
    pub fn contains_convex(&self, p: Vec2, slack: f64) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            let len = e.norm();
            len == 0.0 || e.cross(p - a) / len >= -slack
        })
    }
}

/// Signed shoelace area; positive for counterclockwise vertex order.
pub fn polygon_area(poly: &Polygon) -> f64 {
    0.5 * poly.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
}

/// Area centroid (uniform density) of a simple polygon.
pub fn polygon_centroid(poly: &Polygon) -> Result<Vec2, GeometryError> {
    // Shift to the first vertex to limit cancellation on far-off polygons.
    let origin = poly.vertices[0];
    let mut twice_area = 0.0;
    let mut moment = Vec2::ZERO;
    for (a, b) in poly.edges() {
        let (a, b) = (a - origin, b - origin);
        let c = a.cross(b);
        twice_area += c;
        moment += (a + b) * c;
    }
    let area = 0.5 * twice_area;
    if area.abs() < TOL.degenerate_polygon_area {
        return Err(GeometryError::DegeneratePolygon(area));
    }
    Ok(origin + moment / (6.0 * area))
}

/// Strictly convex quadrilateral with counterclockwise vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexQuad {
    vertices: [Vec2; 4],
}

impl ConvexQuad {
    pub fn new(vertices: [Vec2; 4]) -> Result<Self, GeometryError> {
        Self::with_area_epsilon(vertices, TOL.area_epsilon)
    }

    pub fn with_area_epsilon(vertices: [Vec2; 4], area_epsilon: f64) -> Result<Self, GeometryError> {
        if !vertices.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotConvex("non-finite vertex".into()));
        }
        for i in 0..4 {
            let e0 = vertices[(i + 1) % 4] - vertices[i];
            let e1 = vertices[(i + 2) % 4] - vertices[(i + 1) % 4];
            let turn = e0.cross(e1);
            if turn <= 0.0 {
                return Err(GeometryError::NotConvex(format!(
                    "turn at vertex {} is {turn:e}",
                    (i + 1) % 4
                )));
            }
        }
        let quad = Self { vertices };
        let area = quad.area();
        if area < area_epsilon {
            return Err(GeometryError::NotConvex(format!("area {area:e} below {area_epsilon:e}")));
        }
        Ok(quad)
    }

    pub fn is_convex(vertices: [Vec2; 4]) -> bool {
        Self::new(vertices).is_ok()
    }

    pub fn vertices(&self) -> &[Vec2; 4] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        0.5 * (v[2] - v[0]).cross(v[3] - v[1])
    }

    pub fn centroid(&self) -> Vec2 {
        polygon_centroid(&self.to_polygon()).expect("convex quad has positive area")
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon { vertices: self.vertices.to_vec() }
    }

    /// Nearest point on the quad's boundary.
    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        (0..4)
            .map(|i| closest_point_on_segment(p, self.vertices[i], self.vertices[(i + 1) % 4]))
            .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
            .expect("four edges")
    }
}

/// Inside-or-on-boundary test.
pub fn point_in_quad(quad: &ConvexQuad, p: Vec2) -> bool {
    let v = quad.vertices();
    (0..4).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % 4];
        (b - a).cross(p - a) >= -TOL.containment_epsilon
    })
}

pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// Minimum distance from `p` to any segment of `polyline`. `polyline` needs two points.
pub fn distance_point_to_polyline(p: Vec2, polyline: &[Vec2]) -> f64 {
    assert!(polyline.len() >= 2, "polyline needs at least two points");
    polyline
        .windows(2)
        .map(|w| closest_point_on_segment(p, w[0], w[1]).distance(p))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> ConvexQuad {
        ConvexQuad::new([
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn square_and_triangle_centroids() {
        let sq = unit_square().to_polygon();
        assert_eq!(polygon_area(&sq), 1.0);
        assert_eq!(polygon_centroid(&sq).unwrap(), Vec2::new(0.5, 0.5));

        let tri = Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]).unwrap();
        assert_eq!(polygon_area(&tri), 0.5);
        let c = polygon_centroid(&tri).unwrap();
        assert!((c - Vec2::new(1.0 / 3.0, 1.0 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn hexagon_centroid_matches_monte_carlo() {
        // irregular convex hexagon of roughly unit size
        let hex = Polygon::new(
            [(0.0, 0.0), (2.0, -0.3), (3.1, 0.8), (2.6, 2.2), (0.9, 2.5), (-0.4, 1.3)]
                .iter()
                .map(|&(x, y)| Vec2::new(0.3 * x, 0.3 * y))
                .collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut sum, mut hits) = (Vec2::ZERO, 0usize);
        for _ in 0..1_000_000 {
            let q = Vec2::new(rng.gen_range(-0.12..0.93), rng.gen_range(-0.09..0.75));
            if hex.contains_convex(q, 0.0) {
                sum += q;
                hits += 1;
            }
        }
        let mc = sum / hits as f64;
        let c = polygon_centroid(&hex).unwrap();
        assert!((mc - c).norm() < 1e-3, "{mc:?} vs {c:?}");
        assert!(hex.contains_convex(c, 0.0));
    }

    #[test]
    fn degenerate_polygon_is_an_error() {
        let flat = Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]).unwrap();
        assert!(matches!(polygon_centroid(&flat), Err(GeometryError::DegeneratePolygon(_))));
        assert!(Polygon::new(vec![Vec2::ZERO; 2]).is_err());
    }

    #[test]
    fn convex_quad_validation() {
        assert!(ConvexQuad::new([
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ])
        .is_err(), "clockwise");
        assert!(ConvexQuad::new([
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.3, 0.3),
            Vec2::new(0.0, 1.0),
        ])
        .is_err(), "reflex vertex");
        assert!(ConvexQuad::new([
            Vec2::new(0.0, 0.0),
            Vec2::new(1e-5, 0.0),
            Vec2::new(1e-5, 1e-5),
            Vec2::new(0.0, 1e-5),
        ])
        .is_err(), "area below epsilon");
    }

    #[test]
    fn quad_containment() {
        let q = unit_square();
        assert!(point_in_quad(&q, Vec2::new(0.5, 0.5)));
        assert!(!point_in_quad(&q, Vec2::new(1.5, 0.5)));
        assert!(point_in_quad(&q, Vec2::new(1.0, 0.5)));
        assert!(point_in_quad(&q, Vec2::new(1.0, 1.0)));
        assert_eq!(q.closest_boundary_point(Vec2::new(1.5, 0.5)), Vec2::new(1.0, 0.5));
    }

    #[test]
    fn small_perturbations_keep_unit_quad_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = *unit_square().vertices();
        for _ in 0..10_000 {
            let mut v = base;
            for p in &mut v {
                let r = 0.05 * rng.gen::<f64>();
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                *p += Vec2::new(r * a.cos(), r * a.sin());
            }
            assert!(ConvexQuad::is_convex(v));
        }
    }

    #[test]
    fn polyline_distance() {
        let line = [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)];
        assert_eq!(distance_point_to_polyline(Vec2::new(0.0, 1.0), &line), 1.0);
        assert_eq!(distance_point_to_polyline(Vec2::new(0.25, 0.0), &line), 0.0);
        assert_eq!(distance_point_to_polyline(Vec2::new(2.0, 0.0), &line), 1.0);
    }

    #[test]
    fn polyline_distance_matches_exhaustive_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path: Vec<Vec2> = (0..101)
            .map(|i| Vec2::new(i as f64 * 0.1, (i as f64 * 0.37).sin()))
            .collect();
        for _ in 0..200 {
            let p = Vec2::new(rng.gen_range(-1.0..11.0), rng.gen_range(-2.0..2.0));
            // brute force: parametric projection on every segment, sampled densely
            let mut best = f64::INFINITY;
            for w in path.windows(2) {
                for k in 0..=200 {
                    let q = w[0].lerp(w[1], k as f64 / 200.0);
                    best = best.min(q.distance(p));
                }
            }
            let d = distance_point_to_polyline(p, &path);
            assert!(d <= best + 1e-12 && best - d < 2e-3, "{d} vs {best}");
        }
    }
}
