//! The leader team as a mass-spring-damper network on a 2×(M/2) ladder grid
//! with both diagonals in every mesh.
//!
//! Leaders are numbered from zero here: leaders `2j` and `2j + 1` form rung
//! `j`, with rung 0 the head of the network. Mesh `h` (zero-based) has the
//! counterclockwise vertices `2h, 2h + 1, 2h + 3, 2h + 2`, which is the
//! one-based `x_{2h-1}, x_{2h}, x_{2h+2}, x_{2h+1}` labeling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexQuad, GeometryError, Vec2};

/// Largest spring strain ratio for which every mesh stays convex:
/// `(2 - √2) / (2 + √2)`, about 17.2%.
pub const ELONGATION_BOUND: f64 = (2.0 - std::f64::consts::SQRT_2) / (2.0 + std::f64::consts::SQRT_2);

/// Connected leaders closer than this have no defined spring direction (m).
pub const COINCIDENT_LEADERS: f64 = 1e-9;

/// Largest accepted integration step (s).
pub const MAX_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),
    #[error("leaders {0} and {1} coincide")]
    CoincidentLeaders(usize, usize),
    #[error("non-finite force on leader {0}")]
    NonFiniteForce(usize),
    #[error("time step {0} outside (0, {MAX_DT}]")]
    BadTimeStep(f64),
    #[error("expected {expected} per-leader values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mesh {mesh} is degenerate: {source}")]
    DegenerateMesh { mesh: usize, source: GeometryError },
}

/// Physical parameters shared by all leaders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdParams {
    /// Mass of each leader (kg).
    pub mass: f64,
    /// Damping constant (N·s/m).
    pub damping: f64,
    /// Spring stiffness (N/m).
    pub stiffness: f64,
    /// Rest length of rail and rung springs (m); diagonals rest at √2 times this.
    pub rest_length: f64,
    /// Number of leaders, even and at least 4.
    pub leader_count: usize,
}

impl MsdParams {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let positive = [
            ("mass", self.mass),
            ("damping", self.damping),
            ("stiffness", self.stiffness),
            ("rest_length", self.rest_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NetworkError::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.leader_count < 4 || !self.leader_count.is_multiple_of(2) {
            return Err(NetworkError::InvalidParams(format!(
                "leader_count must be even and >= 4, got {}",
                self.leader_count
            )));
        }
        Ok(())
    }

    pub fn mesh_count(&self) -> usize {
        self.leader_count / 2 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringEdge {
    pub k: usize,
    pub l: usize,
    pub rest: f64,
}

/// Rails, rungs and both diagonals of every mesh. Each undirected edge once, `k < l`.
pub fn build_grid_topology(params: &MsdParams) -> Vec<SpringEdge> {
    let rungs = params.leader_count / 2;
    let l0 = params.rest_length;
    let diag = std::f64::consts::SQRT_2 * l0;
    let mut edges = Vec::with_capacity(5 * rungs);
    for j in 0..rungs {
        edges.push(SpringEdge { k: 2 * j, l: 2 * j + 1, rest: l0 });
    }
    for j in 0..rungs - 1 {
        let (a, b, c, d) = (2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3);
        edges.push(SpringEdge { k: a, l: c, rest: l0 });
        edges.push(SpringEdge { k: b, l: d, rest: l0 });
        edges.push(SpringEdge { k: a, l: d, rest: diag });
        edges.push(SpringEdge { k: b, l: c, rest: diag });
    }
    edges
}

/// Vertex indices of mesh `h`, counterclockwise.
pub fn mesh_vertex_indices(h: usize) -> [usize; 4] {
    [2 * h, 2 * h + 1, 2 * h + 3, 2 * h + 2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub time: f64,
}

impl LeaderState {
    /// Rest-length grid at rest. The head rung is centered on `head_center`,
    /// perpendicular to `heading`, and the tail trails behind it.
    pub fn rest_grid(params: &MsdParams, head_center: Vec2, heading: Vec2) -> Self {
        let fwd = heading.normalized().unwrap_or(Vec2::new(1.0, 0.0));
        let left = fwd.perp();
        let l0 = params.rest_length;
        let positions = (0..params.leader_count)
            .map(|k| {
                let rung = (k / 2) as f64;
                // even index on the right of the heading, odd on the left
                let side = if k % 2 == 0 { -0.5 } else { 0.5 };
                head_center - fwd * (rung * l0) + left * (side * l0)
            })
            .collect();
        Self { positions, velocities: vec![Vec2::ZERO; params.leader_count], time: 0.0 }
    }

    pub fn leader_count(&self) -> usize {
        self.positions.len()
    }

    pub fn mesh_count(&self) -> usize {
        self.positions.len() / 2 - 1
    }

    pub fn mesh_vertices(&self, h: usize) -> [Vec2; 4] {
        mesh_vertex_indices(h).map(|k| self.positions[k])
    }

    pub fn mesh_velocities(&self, h: usize) -> [Vec2; 4] {
        mesh_vertex_indices(h).map(|k| self.velocities[k])
    }

    pub fn mesh(&self, h: usize) -> Result<ConvexQuad, NetworkError> {
        ConvexQuad::new(self.mesh_vertices(h)).map_err(|source| NetworkError::DegenerateMesh { mesh: h, source })
    }

    pub fn meshes(&self) -> Result<Vec<ConvexQuad>, NetworkError> {
        (0..self.mesh_count()).map(|h| self.mesh(h)).collect()
    }

    /// Midpoint of the two head leaders.
    pub fn head_center(&self) -> Vec2 {
        (self.positions[0] + self.positions[1]) * 0.5
    }

    /// Outer boundary of the domain, counterclockwise.
    pub fn boundary(&self) -> Vec<Vec2> {
        let m = self.positions.len();
        let right = (0..m).step_by(2).rev();
        let left = (1..m).step_by(2);
        // walk the right side tail to head, then the left side head to tail
        right.chain(left).map(|k| self.positions[k]).collect()
    }

    pub fn momentum(&self, mass: f64) -> Vec2 {
        self.velocities.iter().map(|&v| v * mass).sum()
    }
}

/// Spring and damper forces on every leader.
pub fn internal_forces(
    state: &LeaderState,
    edges: &[SpringEdge],
    params: &MsdParams,
) -> Result<Vec<Vec2>, NetworkError> {
    let mut forces = vec![Vec2::ZERO; state.leader_count()];
    for e in edges {
        let d = state.positions[e.k] - state.positions[e.l];
        let len = d.norm();
        if len <= COINCIDENT_LEADERS {
            return Err(NetworkError::CoincidentLeaders(e.k, e.l));
        }
        let spring = d * (-params.stiffness * (len - e.rest) / len);
        let damper = (state.velocities[e.k] - state.velocities[e.l]) * -params.damping;
        let f = spring + damper;
        forces[e.k] += f;
        forces[e.l] -= f;
    }
    Ok(forces)
}

/// Lyapunov function of the homogeneous network: per-unit-mass spring energy
/// plus half the squared velocity norm.
pub fn system_energy(state: &LeaderState, edges: &[SpringEdge], params: &MsdParams) -> f64 {
    // Each edge enters the per-leader sums twice and is then halved.
    let potential: f64 = edges
        .iter()
        .map(|e| {
            let s = state.positions[e.k].distance(state.positions[e.l]) - e.rest;
            params.stiffness / (2.0 * params.mass) * s * s
        })
        .sum();
    let kinetic: f64 = state.velocities.iter().map(|v| 0.5 * v.norm_sq()).sum();
    potential + kinetic
}

/// One semi-implicit Euler step: velocities first, then positions with the new velocities.
pub fn step(
    state: &LeaderState,
    external: &[Vec2],
    edges: &[SpringEdge],
    params: &MsdParams,
    dt: f64,
) -> Result<LeaderState, NetworkError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(NetworkError::BadTimeStep(dt));
    }
    if external.len() != state.leader_count() {
        return Err(NetworkError::LengthMismatch { expected: state.leader_count(), got: external.len() });
    }
    let internal = internal_forces(state, edges, params)?;
    let mut next = state.clone();
    for (k, (fi, fe)) in internal.iter().zip(external).enumerate() {
        let f = *fi + *fe;
        if !f.is_finite() {
            return Err(NetworkError::NonFiniteForce(k));
        }
        next.velocities[k] += f * (dt / params.mass);
        next.positions[k] += next.velocities[k] * dt;
    }
    next.time += dt;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElongationReport {
    /// `|length - rest| / rest`, one per edge in topology order.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Edges whose ratio exceeds [`ELONGATION_BOUND`].
    pub flagged: Vec<usize>,
}

pub fn elongation_report(state: &LeaderState, edges: &[SpringEdge]) -> ElongationReport {
    let ratios: Vec<f64> = edges
        .iter()
        .map(|e| (state.positions[e.k].distance(state.positions[e.l]) - e.rest).abs() / e.rest)
        .collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let flagged = ratios
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > ELONGATION_BOUND)
        .map(|(i, _)| i)
        .collect();
    ElongationReport { ratios, max_ratio, flagged }
}
