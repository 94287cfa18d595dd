//! Planar geometry kernel.

mod homography;
mod shapes;
mod vec2;
mod voronoi;

pub use homography::{homography_from_quads, Homography};
pub use shapes::{
    closest_point_on_segment, distance_point_to_polyline, point_in_quad, polygon_area,
    polygon_centroid, ConvexQuad, Polygon, Rect,
};
pub use vec2::{Mat2, Vec2};
pub(crate) use voronoi::{labeled_cell_unchecked, labeled_voronoi};
pub use voronoi::{bounded_voronoi, bounded_voronoi_cell, voronoi_neighbors, LabeledCell, EdgeSource};

use thiserror::Error;

/// Every geometric tolerance used by the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Minimum signed area of a convex quad (m²).
    pub area_epsilon: f64,
    /// Minimum |det| of a homography matrix.
    pub singularity_epsilon: f64,
    /// Minimum |w| of a homogeneous denominator.
    pub projective_epsilon: f64,
    /// Generators closer than this are coincident (m).
    pub coincident_epsilon: f64,
    /// Shared Voronoi boundary shorter than this does not make two cells neighbors (m).
    pub shared_edge_epsilon: f64,
    /// Slack on edge cross products for point-in-quad tests.
    pub containment_epsilon: f64,
    /// Minimum |area| of a polygon whose centroid is requested (m²).
    pub degenerate_polygon_area: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        area_epsilon: 1e-9,
        singularity_epsilon: 1e-12,
        projective_epsilon: 1e-12,
        coincident_epsilon: 1e-9,
        shared_edge_epsilon: 1e-9,
        containment_epsilon: 1e-12,
        degenerate_polygon_area: 1e-12,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub const TOL: Tolerances = Tolerances::DEFAULT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("quadrilateral is not strictly convex and counterclockwise: {0}")]
    NotConvex(String),
    #[error("rectangle must have positive width and height (got {width} x {height})")]
    BadRect { width: f64, height: f64 },
    #[error("polygon needs at least 3 vertices (got {0})")]
    TooFewVertices(usize),
    #[error("polygon area {0:e} is too small")]
    DegeneratePolygon(f64),
    #[error("point-correspondence system is singular")]
    SingularSystem,
    #[error("point lies on the vanishing line of the projective map (w = {0:e})")]
    ProjectiveInfinity(f64),
    #[error("generators {0} and {1} coincide")]
    CoincidentGenerators(usize, usize),
    #[error("generator {index} at ({x}, {y}) lies outside the domain")]
    GeneratorOutsideDomain { index: usize, x: f64, y: f64 },
    #[error("jacobian is singular (det = {0:e})")]
    SingularJacobian(f64),
}
