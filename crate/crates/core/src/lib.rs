//! Leader-follower navigation for large robot teams.
//!
//! Leaders form a mass-spring-damper network that tracks a reference path and
//! deforms around obstacles. The quadrilateral meshes spanned by the leaders are
//! flattened one by one onto a static rectangle with perspective maps, where the
//! followers run centroidal Voronoi coverage; the resulting velocities are pulled
//! back into the real, deforming domain.
//!
//! Layers, bottom up:
//!
//! * [`geometry`]: vectors, quads, homographies, bounded Voronoi cells.
//! * [`leader_network`]: grid topology, internal forces, integration, energy.
//! * [`forces`]: sensing, tracking, orienting and friction forces on leaders.
//! * [`path_planner`]: potential-field reference path and its queries.
//! * [`coverage`]: virtual domain, coverage control laws, velocity pull-back.
//! * [`simulator`]: the per-step pipeline and run summary.
//! * [`scenario`] and [`runlog`]: the on-disk formats.

pub mod coverage;
pub mod forces;
pub mod geometry;
pub mod leader_network;
pub mod linalg;
pub mod path_planner;
pub mod runlog;
pub mod scenario;
pub mod selfcheck;
pub mod simulator;

pub use geometry::{ConvexQuad, Homography, Mat2, Polygon, Rect, Vec2};
