//! Follower coverage over the leader-defined domain.
//!
//! Every leader mesh is flattened onto one cell of a static rectangle (the
//! virtual domain) by its own perspective map. Coverage control runs on the
//! flattened follower positions, and the commanded velocities are pulled back
//! through each map's Jacobian and time derivative.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    homography_from_quads, labeled_cell_unchecked, labeled_voronoi, point_in_quad, ConvexQuad, GeometryError, Homography,
    LabeledCell, Polygon, Rect, Vec2,
};
use crate::leader_network::{LeaderState, NetworkError};
use crate::linalg::{condition_one, DenseMatrix};

/// Condition number of `I − ∂C/∂p` above which the exact law is abandoned.
pub const MAX_CONDITION: f64 = 1e8;

/// Forward-difference step for the time derivative of a mesh map (s).
pub const TIME_DERIVATIVE_STEP: f64 = 1e-6;

/// Minimum |det| of the homography Jacobian for the pull-back.
pub const MIN_JACOBIAN_DET: f64 = 1e-10;

/// Followers pushed back into the domain land this far inside (m).
pub const CONTAINMENT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverageError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mesh {mesh} is degenerate: {source}")]
    DegenerateMesh { mesh: usize, source: GeometryError },
    #[error("follower {0} is outside every mesh")]
    FollowerEscapedDomain(usize),
    #[error("perturbation changed the Voronoi adjacency of cell {cell}")]
    TopologyBoundary { cell: usize },
    #[error("I - dC/dp is ill-conditioned (condition {0:e})")]
    IllConditioned(f64),
    #[error("homography jacobian is singular at follower position (det {0:e})")]
    SingularJacobian(f64),
    #[error("invalid coverage setup: {0}")]
    Invalid(String),
}

impl From<NetworkError> for CoverageError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::DegenerateMesh { mesh, source } => CoverageError::DegenerateMesh { mesh, source },
            other => CoverageError::Invalid(other.to_string()),
        }
    }
}

/// Importance weighting over the virtual domain. Only uniform density is supported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityField {
    #[default]
    Uniform,
}

impl DensityField {
    pub fn value(&self, _q: Vec2) -> f64 {
        match self {
            DensityField::Uniform => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageLaw {
    /// `(I − ∂C/∂p)⁻¹ K(C − p)`.
    Exact,
    /// First-order Neumann truncation `(I + ∂C/∂p) K(C − p)`.
    Decentralized,
    /// `K(C − p)`.
    Lloyd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageGains {
    /// Convergence gain K (1/s).
    pub gain: f64,
    pub law: CoverageLaw,
}

/// The static rectangle the meshes are flattened onto.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualDomain {
    pub cell_width: f64,
    pub cell_height: f64,
    pub mesh_count: usize,
    pub rect: Rect,
    /// Prescribed image of every leader, indexed like the leaders.
    pub virtual_vertices: Vec<Vec2>,
}

impl VirtualDomain {
    /// Cells laid out left to right from the tail; the head rung sits on the right edge.
    pub fn new(mesh_count: usize, cell_width: f64, cell_height: f64) -> Result<Self, CoverageError> {
        if mesh_count == 0 {
            return Err(CoverageError::Invalid("need at least one mesh".into()));
        }
        let rect = Rect::new(Vec2::ZERO, mesh_count as f64 * cell_width, cell_height)?;
        let virtual_vertices = (0..2 * (mesh_count + 1))
            .map(|k| {
                let x = (mesh_count - k / 2) as f64 * cell_width;
                let y = if k % 2 == 0 { 0.0 } else { cell_height };
                Vec2::new(x, y)
            })
            .collect();
        Ok(Self { cell_width, cell_height, mesh_count, rect, virtual_vertices })
    }

    pub fn cell(&self, h: usize) -> ConvexQuad {
        let idx = crate::leader_network::mesh_vertex_indices(h);
        ConvexQuad::new(idx.map(|k| self.virtual_vertices[k])).expect("virtual cells are rectangles")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerState {
    /// Real positions.
    pub positions: Vec<Vec2>,
    /// Mesh containing each follower.
    pub mesh_index: Vec<usize>,
    /// Flattened positions in the virtual rectangle.
    pub virtual_positions: Vec<Vec2>,
}

/// One flattening map per mesh.
pub fn mesh_homographies(leaders: &LeaderState, vd: &VirtualDomain) -> Result<Vec<Homography>, CoverageError> {
    (0..leaders.mesh_count())
        .map(|h| {
            let quad = leaders.mesh(h)?;
            homography_from_quads(&quad, &vd.cell(h)).map_err(|source| CoverageError::DegenerateMesh { mesh: h, source })
        })
        .collect()
}

/// Assigns every follower to the lowest-indexed mesh containing it and maps it
/// into the virtual rectangle.
pub fn assign_and_flatten(
    followers: &[Vec2],
    leaders: &LeaderState,
    homographies: &[Homography],
    vd: &VirtualDomain,
) -> Result<FollowerState, CoverageError> {
    let meshes = leaders.meshes()?;
    let mut mesh_index = Vec::with_capacity(followers.len());
    let mut virtual_positions = Vec::with_capacity(followers.len());
    for (i, &p) in followers.iter().enumerate() {
        let h = meshes
            .iter()
            .position(|q| point_in_quad(q, p))
            .ok_or(CoverageError::FollowerEscapedDomain(i))?;
        // boundary points may land a rounding error outside the rectangle
        let v = vd.rect.clamp(homographies[h].apply(p)?);
        mesh_index.push(h);
        virtual_positions.push(v);
    }
    Ok(FollowerState { positions: followers.to_vec(), mesh_index, virtual_positions })
}

/// `∫ ‖p − q‖² dq` over a convex polygon, exact for uniform density via a fan
/// of triangles around the polygon centroid.
fn polygon_second_moment(poly: &[Vec2], p: Vec2) -> f64 {
    let n = poly.len();
    let c = poly.iter().copied().sum::<Vec2>() / n as f64;
    (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            let area = 0.5 * (a - c).cross(b - c);
            let g = (a + b + c) / 3.0;
            let edges = (a - b).norm_sq() + (b - c).norm_sq() + (c - a).norm_sq();
            area * ((g - p).norm_sq() + edges / 36.0)
        })
        .sum()
}

fn check_density(density: &DensityField) {
    // the only variant; keeps the signature ready for weighted cells
    let DensityField::Uniform = density;
}

/// Locational cost of the flattened followers.
pub fn locational_cost(virtual_followers: &[Vec2], vd: &VirtualDomain, density: &DensityField) -> Result<f64, CoverageError> {
    check_density(density);
    let cells = labeled_voronoi(virtual_followers, &vd.rect)?;
    Ok(cells.iter().zip(virtual_followers).map(|(c, &p)| polygon_second_moment(&c.vertices, p)).sum())
}

fn cell_centroid(cell: &LabeledCell) -> Result<Vec2, CoverageError> {
    Ok(Polygon::new(cell.vertices.clone())?.centroid()?)
}

/// Centroid of every follower's Voronoi cell.
pub fn centroids(virtual_followers: &[Vec2], vd: &VirtualDomain, density: &DensityField) -> Result<Vec<Vec2>, CoverageError> {
    check_density(density);
    labeled_voronoi(virtual_followers, &vd.rect)?.iter().map(cell_centroid).collect()
}

/// Sum of follower-to-centroid distances.
pub fn aggregate_error(virtual_followers: &[Vec2], vd: &VirtualDomain, density: &DensityField) -> Result<f64, CoverageError> {
    let c = centroids(virtual_followers, vd, density)?;
    Ok(virtual_followers.iter().zip(&c).map(|(p, c)| p.distance(*c)).sum())
}

/// Finite-difference step for the centroid Jacobian.
pub fn jacobian_step(vd: &VirtualDomain) -> f64 {
    1e-6 * vd.rect.max_dim()
}

/// `∂C/∂p` as a 2N×2N matrix by central differences, with blocks outside the
/// Voronoi adjacency set to exact zero.
///
/// Only the perturbed generator's cell and its neighbors are recomputed for
/// each column. Fails with `TopologyBoundary` when a perturbation changes the
/// adjacency of any recomputed cell.
pub fn centroid_jacobian(
    virtual_followers: &[Vec2],
    vd: &VirtualDomain,
    density: &DensityField,
) -> Result<DenseMatrix, CoverageError> {
    check_density(density);
    let base = labeled_voronoi(virtual_followers, &vd.rect)?;
    let neighbors: Vec<Vec<usize>> = base.iter().map(LabeledCell::neighbors).collect();
    let n = virtual_followers.len();
    let eps = jacobian_step(vd);
    let mut jac = DenseMatrix::zeros(2 * n);
    let mut pts = virtual_followers.to_vec();
    for j in 0..n {
        let affected: Vec<usize> = std::iter::once(j).chain(neighbors[j].iter().copied()).collect();
        for axis in 0..2 {
            let mut diff = vec![Vec2::ZERO; affected.len()];
            for sign in [1.0, -1.0] {
                pts[j] = virtual_followers[j] + axis_vec(axis) * (sign * eps);
                for (slot, &i) in affected.iter().enumerate() {
                    let cell = labeled_cell_unchecked(&pts, i, &vd.rect);
                    if cell.neighbors() != neighbors[i] {
                        return Err(CoverageError::TopologyBoundary { cell: i });
                    }
                    diff[slot] += cell_centroid(&cell)? * sign;
                }
            }
            pts[j] = virtual_followers[j];
            for (slot, &i) in affected.iter().enumerate() {
                let d = diff[slot] / (2.0 * eps);
                jac[(2 * i, 2 * j + axis)] = d.x;
                jac[(2 * i + 1, 2 * j + axis)] = d.y;
            }
        }
    }
    Ok(jac)
}

/// Central-difference `∂C/∂p` over every cell, without masking or topology
/// checks. Used to measure how close non-neighbor blocks are to zero.
pub fn centroid_jacobian_dense(
    virtual_followers: &[Vec2],
    vd: &VirtualDomain,
    density: &DensityField,
) -> Result<DenseMatrix, CoverageError> {
    check_density(density);
    let n = virtual_followers.len();
    let eps = jacobian_step(vd);
    let mut jac = DenseMatrix::zeros(2 * n);
    let mut pts = virtual_followers.to_vec();
    for j in 0..n {
        for axis in 0..2 {
            pts[j] = virtual_followers[j] + axis_vec(axis) * eps;
            let plus = centroids(&pts, vd, density)?;
            pts[j] = virtual_followers[j] - axis_vec(axis) * eps;
            let minus = centroids(&pts, vd, density)?;
            pts[j] = virtual_followers[j];
            for i in 0..n {
                let d = (plus[i] - minus[i]) / (2.0 * eps);
                jac[(2 * i, 2 * j + axis)] = d.x;
                jac[(2 * i + 1, 2 * j + axis)] = d.y;
            }
        }
    }
    Ok(jac)
}

fn axis_vec(axis: usize) -> Vec2 {
    if axis == 0 {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    }
}

/// Virtual velocities and how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub velocities: Vec<Vec2>,
    pub centroids: Vec<Vec2>,
    /// The law actually applied after any fallback.
    pub law_used: CoverageLaw,
    /// Set when the Jacobian straddled a tessellation change and Lloyd was used instead.
    pub topology_fallback: bool,
}

/// Coverage velocities in the virtual rectangle. The centroids do not depend
/// on time there, so the `∂C/∂t` term vanishes.
pub fn virtual_control(
    virtual_followers: &[Vec2],
    vd: &VirtualDomain,
    density: &DensityField,
    gains: &CoverageGains,
) -> Result<ControlOutput, CoverageError> {
    let c = centroids(virtual_followers, vd, density)?;
    let k = gains.gain;
    let lloyd: Vec<Vec2> = virtual_followers.iter().zip(&c).map(|(p, c)| (*c - *p) * k).collect();
    let done = |velocities, law_used, topology_fallback| ControlOutput {
        velocities,
        centroids: c.clone(),
        law_used,
        topology_fallback,
    };
    if gains.law == CoverageLaw::Lloyd {
        return Ok(done(lloyd, CoverageLaw::Lloyd, false));
    }
    let jac = match centroid_jacobian(virtual_followers, vd, density) {
        Ok(j) => j,
        Err(CoverageError::TopologyBoundary { .. }) => return Ok(done(lloyd, CoverageLaw::Lloyd, true)),
        Err(e) => return Err(e),
    };
    let rhs = flatten(&lloyd);
    if gains.law == CoverageLaw::Exact {
        let mut m = DenseMatrix::identity(rhs.len());
        for i in 0..rhs.len() {
            for j in 0..rhs.len() {
                m[(i, j)] -= jac[(i, j)];
            }
        }
        let cond = condition_one(&m);
        if cond <= MAX_CONDITION {
            let u = m.solve(&rhs).map_err(|_| CoverageError::IllConditioned(cond))?;
            return Ok(done(unflatten(&u), CoverageLaw::Exact, false));
        }
        warn!("{}; falling back to the decentralized law", CoverageError::IllConditioned(cond));
    }
    let correction = jac.mul_vec(&rhs);
    let u: Vec<f64> = rhs.iter().zip(&correction).map(|(a, b)| a + b).collect();
    Ok(done(unflatten(&u), CoverageLaw::Decentralized, false))
}

fn flatten(v: &[Vec2]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(v: &[f64]) -> Vec<Vec2> {
    v.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

/// Rate of change of `T_h(p)` for a fixed real point while the mesh vertices
/// move with the leader velocities (forward difference).
pub fn homography_time_derivative(
    h_now: &Homography,
    leaders: &LeaderState,
    mesh: usize,
    vd: &VirtualDomain,
    p: Vec2,
    delta: f64,
) -> Result<Vec2, CoverageError> {
    let verts = leaders.mesh_vertices(mesh);
    let vels = leaders.mesh_velocities(mesh);
    let advanced: [Vec2; 4] = std::array::from_fn(|i| verts[i] + vels[i] * delta);
    let quad = ConvexQuad::new(advanced).map_err(|source| CoverageError::DegenerateMesh { mesh, source })?;
    let h_next = homography_from_quads(&quad, &vd.cell(mesh)).map_err(|source| CoverageError::DegenerateMesh { mesh, source })?;
    Ok((h_next.apply(p)? - h_now.apply(p)?) / delta)
}

/// Real velocity whose image under the moving map is `virtual_velocity`.
pub fn pull_back_velocity(
    p: Vec2,
    h_now: &Homography,
    dt_dt: Vec2,
    virtual_velocity: Vec2,
) -> Result<Vec2, CoverageError> {
    let jac = h_now.jacobian(p)?;
    jac.solve(virtual_velocity - dt_dt, MIN_JACOBIAN_DET)
        .ok_or(CoverageError::SingularJacobian(jac.det()))
}

/// Largest disagreement between neighboring mesh maps along their shared rungs.
pub fn seam_mismatch(leaders: &LeaderState, vd: &VirtualDomain) -> Result<f64, CoverageError> {
    let hs = mesh_homographies(leaders, vd)?;
    let mut worst: f64 = 0.0;
    for h in 0..hs.len().saturating_sub(1) {
        let (a, b) = (leaders.positions[2 * h + 2], leaders.positions[2 * h + 3]);
        for k in 1..=50 {
            let q = a.lerp(b, k as f64 / 51.0);
            worst = worst.max(hs[h].apply(q)?.distance(hs[h + 1].apply(q)?));
        }
    }
    Ok(worst)
}

/// Keeps `p` if some mesh contains it, otherwise moves it just inside the
/// nearest mesh. The flag reports whether it moved.
pub fn contain(p: Vec2, meshes: &[ConvexQuad]) -> (Vec2, bool) {
    if meshes.iter().any(|q| point_in_quad(q, p)) {
        return (p, false);
    }
    let (quad, edge_point) = meshes
        .iter()
        .map(|q| (q, q.closest_boundary_point(p)))
        .min_by(|a, b| a.1.distance(p).total_cmp(&b.1.distance(p)))
        .expect("at least one mesh");
    let center = quad.centroid();
    let inward = (center - edge_point).normalized().unwrap_or(Vec2::ZERO);
    let mut margin = CONTAINMENT_MARGIN;
    loop {
        let q = edge_point + inward * margin;
        if point_in_quad(quad, q) || margin > 1e-2 {
            return (q, true);
        }
        margin *= 10.0;
    }
}

/// Uniform random points inside the leader domain with a minimum pairwise separation.
pub fn random_followers<R: rand::Rng>(
    count: usize,
    leaders: &LeaderState,
    min_separation: f64,
    rng: &mut R,
) -> Result<Vec<Vec2>, CoverageError> {
    let meshes = leaders.meshes()?;
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in &leaders.positions {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let mut out: Vec<Vec2> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(CoverageError::Invalid(format!(
                "could not place {count} followers {min_separation} m apart"
            )));
        }
        let q = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if meshes.iter().any(|m| point_in_quad(m, q)) && out.iter().all(|o| o.distance(q) >= min_separation) {
            out.push(q);
        }
    }
    Ok(out)
}
