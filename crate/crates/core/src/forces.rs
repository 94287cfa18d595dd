//! External forces on the leaders: obstacle sensing, path tracking, head
//! orienting and friction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{closest_point_on_segment, Vec2};
use crate::leader_network::LeaderState;

/// Fraction of the sensing radius where the sensing force starts ramping to zero.
pub const SENSING_RAMP_START: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForceError {
    #[error("invalid force gains: {0}")]
    InvalidGains(String),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("leader at ({x}, {y}) is inside obstacle {obstacle}")]
    InsideObstacle { obstacle: usize, x: f64, y: f64 },
    #[error("leader {leader} is {distance} m from an obstacle, within the safe distance {delta}")]
    SafetyBreached { leader: usize, distance: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceGains {
    /// Sensing gain (N·m).
    pub kappa1: f64,
    /// Tracking feedback gain (1/s).
    pub kappa2: f64,
    /// Friction coefficient (N·s/m).
    pub kappa3: f64,
    /// Orienting gain.
    pub kappa4: f64,
    /// Safe distance to obstacles (m).
    pub delta_sensing: f64,
    /// Obstacle detection range (m).
    pub sensing_radius: f64,
}

impl ForceGains {
    pub fn validate(&self) -> Result<(), ForceError> {
        for (name, v) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("kappa3", self.kappa3),
            ("kappa4", self.kappa4),
            ("delta_sensing", self.delta_sensing),
            ("sensing_radius", self.sensing_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ForceError::InvalidGains(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sensing_radius <= self.delta_sensing {
            return Err(ForceError::InvalidGains(format!(
                "sensing_radius {} must exceed delta_sensing {}",
                self.sensing_radius, self.delta_sensing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Circle { center: Vec2, radius: f64 },
    /// Convex polygon, counterclockwise.
    Polygon { vertices: Vec<Vec2> },
}

impl Obstacle {
    pub fn validate(&self) -> Result<(), ForceError> {
        match self {
            Obstacle::Circle { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite() && center.is_finite()) {
                    return Err(ForceError::InvalidObstacle(format!("circle radius {radius} must be positive")));
                }
            }
            Obstacle::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(ForceError::InvalidObstacle(format!("polygon has {n} vertices")));
                }
                for i in 0..n {
                    let e0 = vertices[(i + 1) % n] - vertices[i];
                    let e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
                    if e0.cross(e1) <= 0.0 {
                        return Err(ForceError::InvalidObstacle(
                            "polygon must be strictly convex and counterclockwise".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Nearest boundary point and its distance; negative distance when `p` is strictly inside.
    pub fn nearest(&self, p: Vec2) -> (Vec2, f64) {
        match self {
            Obstacle::Circle { center, radius } => {
                let d = p - *center;
                let len = d.norm();
                let dir = if len > 0.0 { d / len } else { Vec2::new(1.0, 0.0) };
                (*center + dir * *radius, len - radius)
            }
            Obstacle::Polygon { vertices } => {
                let n = vertices.len();
                let mut best = (vertices[0], f64::INFINITY);
                let mut inside = true;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    if (b - a).cross(p - a) <= 0.0 {
                        inside = false;
                    }
                    let q = closest_point_on_segment(p, a, b);
                    let d = q.distance(p);
                    if d < best.1 {
                        best = (q, d);
                    }
                }
                if inside {
                    (best.0, -best.1)
                } else {
                    best
                }
            }
        }
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.nearest(p).1
    }
}

/// `[o_k, d_k]`: nearest obstacle point and its distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub nearest_point: Vec2,
    pub distance: f64,
    /// False when nothing lies within the sensing radius.
    pub valid: bool,
}

impl SensorReading {
    pub const NONE: SensorReading = SensorReading { nearest_point: Vec2::ZERO, distance: f64::INFINITY, valid: false };
}

/// Nearest point over all obstacles, if within the sensing radius.
pub fn sense(x: Vec2, obstacles: &[Obstacle], gains: &ForceGains) -> Result<SensorReading, ForceError> {
    let mut best = SensorReading::NONE;
    for (i, ob) in obstacles.iter().enumerate() {
        let (q, d) = ob.nearest(x);
        if d <= 0.0 {
            return Err(ForceError::InsideObstacle { obstacle: i, x: x.x, y: x.y });
        }
        if d < best.distance {
            best = SensorReading { nearest_point: q, distance: d, valid: true };
        }
    }
    if best.distance > gains.sensing_radius {
        return Ok(SensorReading { valid: false, ..best });
    }
    Ok(best)
}

/// Barrier repulsion `κ₁/(d − δ)²` directed from the obstacle toward the leader,
/// ramped linearly to zero over the last tenth of the sensing radius.
pub fn sensing_force(x: Vec2, reading: &SensorReading, gains: &ForceGains) -> Result<Vec2, ForceError> {
    if !reading.valid {
        return Ok(Vec2::ZERO);
    }
    let d = reading.distance;
    if d <= gains.delta_sensing {
        return Err(ForceError::SafetyBreached { leader: usize::MAX, distance: d, delta: gains.delta_sensing });
    }
    let dir = match (x - reading.nearest_point).normalized() {
        Some(u) => u,
        None => return Ok(Vec2::ZERO),
    };
    let gap = d - gains.delta_sensing;
    let magnitude = gains.kappa1 / (gap * gap) * sensing_ramp(d, gains.sensing_radius);
    Ok(dir * magnitude)
}

fn sensing_ramp(d: f64, radius: f64) -> f64 {
    let start = SENSING_RAMP_START * radius;
    if d <= start {
        1.0
    } else if d >= radius {
        0.0
    } else {
        (radius - d) / (radius - start)
    }
}

/// Feedforward plus feedback on the head midpoint; only leaders 0 and 1 get it.
pub fn tracking_force(state: &LeaderState, gamma: Vec2, gamma_dot: Vec2, gains: &ForceGains) -> Vec<Vec2> {
    let mut out = vec![Vec2::ZERO; state.leader_count()];
    let f = gamma_dot + (gamma - state.head_center()) * gains.kappa2;
    out[0] = f;
    out[1] = f;
    out
}

/// Equal and opposite forces that turn the head rung perpendicular to the path.
pub fn orienting_force(x1: Vec2, x2: Vec2, gamma_dot: Vec2, gains: &ForceGains) -> (Vec2, Vec2) {
    let s = (x1 - x2).dot(gamma_dot);
    let f = gamma_dot * (gains.kappa4 * s);
    (-f, f)
}

pub fn friction_force(velocity: Vec2, gains: &ForceGains) -> Vec2 {
    velocity * -gains.kappa3
}

/// Sum of all four external forces on every leader.
pub fn total_external(
    state: &LeaderState,
    obstacles: &[Obstacle],
    gamma: Vec2,
    gamma_dot: Vec2,
    gains: &ForceGains,
) -> Result<Vec<Vec2>, ForceError> {
    let mut out = tracking_force(state, gamma, gamma_dot, gains);
    let (o1, o2) = orienting_force(state.positions[0], state.positions[1], gamma_dot, gains);
    out[0] += o1;
    out[1] += o2;
    for (k, f) in out.iter_mut().enumerate() {
        let x = state.positions[k];
        *f += friction_force(state.velocities[k], gains);
        let reading = sense(x, obstacles, gains)?;
        *f += sensing_force(x, &reading, gains).map_err(|e| match e {
            ForceError::SafetyBreached { distance, delta, .. } => ForceError::SafetyBreached { leader: k, distance, delta },
            other => other,
        })?;
    }
    Ok(out)
}
