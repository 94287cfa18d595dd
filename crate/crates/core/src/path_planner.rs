//! Reference path: potential-field planning and constant-speed queries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forces::Obstacle;
use crate::geometry::{distance_point_to_polyline, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("path needs at least two distinct samples")]
    DegeneratePath,
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error("{which} point ({x}, {y}) lies within the clearance of obstacle {obstacle}")]
    BlockedEndpoint { which: &'static str, obstacle: usize, x: f64, y: f64 },
    #[error("descent stalled in a local minimum at ({x}, {y}), {distance} m from the goal")]
    LocalMinimum { x: f64, y: f64, distance: f64 },
    #[error("goal not reached after {0} iterations")]
    MaxIterations(usize),
}

/// Potential-field planner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    pub k_att: f64,
    pub k_rep: f64,
    /// Distance kept from every obstacle boundary (m).
    pub clearance: f64,
    /// Influence range of the repulsive term beyond the clearance; zero means `3·clearance`.
    pub influence: f64,
    /// Descent step length (m).
    pub step: f64,
    pub goal_tolerance: f64,
    pub grad_tolerance: f64,
    /// Moving-average window (samples).
    pub smoothing_window: usize,
    /// Output sample spacing (m).
    pub spacing: f64,
    pub max_iterations: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            k_att: 1.0,
            k_rep: 1.0,
            clearance: 0.5,
            influence: 0.0,
            step: 0.01,
            goal_tolerance: 0.05,
            grad_tolerance: 1e-6,
            smoothing_window: 15,
            spacing: 0.05,
            max_iterations: 200_000,
        }
    }
}

impl PlannerParams {
    fn influence_range(&self) -> f64 {
        if self.influence > 0.0 {
            self.influence
        } else {
            3.0 * self.clearance
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        for (name, v) in [
            ("k_att", self.k_att),
            ("k_rep", self.k_rep),
            ("clearance", self.clearance),
            ("step", self.step),
            ("goal_tolerance", self.goal_tolerance),
            ("grad_tolerance", self.grad_tolerance),
            ("spacing", self.spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlannerError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.influence < 0.0 || self.smoothing_window == 0 || self.max_iterations == 0 {
            return Err(PlannerError::InvalidParams("influence, smoothing_window or max_iterations out of range".into()));
        }
        Ok(())
    }
}

/// Polyline traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    samples: Vec<Vec2>,
    arclength: Vec<f64>,
    speed: f64,
}

impl ReferencePath {
    /// Drops repeated points; fails with fewer than two distinct samples.
    pub fn new(samples: Vec<Vec2>, speed: f64) -> Result<Self, PlannerError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(PlannerError::InvalidParams(format!("v_ref must be positive, got {speed}")));
        }
        let mut pts: Vec<Vec2> = Vec::with_capacity(samples.len());
        for p in samples {
            if !p.is_finite() {
                return Err(PlannerError::InvalidParams("non-finite path sample".into()));
            }
            if pts.last().is_none_or(|q: &Vec2| q.distance(p) > 1e-12) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return Err(PlannerError::DegeneratePath);
        }
        let mut arclength = Vec::with_capacity(pts.len());
        let mut s = 0.0;
        arclength.push(0.0);
        for w in pts.windows(2) {
            s += w[0].distance(w[1]);
            arclength.push(s);
        }
        Ok(Self { samples: pts, arclength, speed })
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn total_length(&self) -> f64 {
        *self.arclength.last().expect("two samples")
    }

    /// Time at which the goal is reached.
    pub fn duration(&self) -> f64 {
        self.total_length() / self.speed
    }

    pub fn start(&self) -> Vec2 {
        self.samples[0]
    }

    pub fn goal(&self) -> Vec2 {
        *self.samples.last().expect("two samples")
    }

    /// Unit tangent at sample `i` (central difference, one-sided at the ends).
    fn tangent_at_sample(&self, i: usize) -> Vec2 {
        let n = self.samples.len();
        let (a, b) = match i {
            0 => (0, 1),
            _ if i + 1 >= n => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        (self.samples[b] - self.samples[a]).normalized().unwrap_or(Vec2::new(1.0, 0.0))
    }

    /// Initial heading of the path.
    pub fn initial_tangent(&self) -> Vec2 {
        self.tangent_at_sample(0)
    }

    /// Position and velocity of the reference point at time `t`.
    pub fn query(&self, t: f64) -> (Vec2, Vec2) {
        let total = self.total_length();
        let s = (self.speed * t.max(0.0)).min(total);
        if s >= total {
            return (self.goal(), Vec2::ZERO);
        }
        // segment containing s
        let seg = match self.arclength.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(self.samples.len() - 2),
            Err(i) => i - 1,
        };
        let (s0, s1) = (self.arclength[seg], self.arclength[seg + 1]);
        let u = (s - s0) / (s1 - s0);
        let gamma = self.samples[seg].lerp(self.samples[seg + 1], u);
        let tangent = self
            .tangent_at_sample(seg)
            .lerp(self.tangent_at_sample(seg + 1), u)
            .normalized()
            .unwrap_or_else(|| self.tangent_at_sample(seg));
        (gamma, tangent * self.speed)
    }

    /// Distance from the head midpoint to the path.
    pub fn tracking_error(&self, head_center: Vec2) -> f64 {
        distance_point_to_polyline(head_center, &self.samples)
    }
}

/// Potential energy at `q`: quadratic attraction plus barrier repulsion from
/// every obstacle inflated by the clearance.
fn potential(q: Vec2, goal: Vec2, obstacles: &[Obstacle], p: &PlannerParams) -> f64 {
    let d0 = p.influence_range();
    let mut u = 0.5 * p.k_att * (q - goal).norm_sq();
    for ob in obstacles {
        let d = ob.distance(q) - p.clearance;
        if d <= 0.0 {
            return f64::INFINITY;
        }
        if d < d0 {
            let r = 1.0 / d - 1.0 / d0;
            u += 0.5 * p.k_rep * r * r;
        }
    }
    u
}

fn gradient(q: Vec2, goal: Vec2, obstacles: &[Obstacle], p: &PlannerParams) -> Vec2 {
    let d0 = p.influence_range();
    let mut g = (q - goal) * p.k_att;
    for ob in obstacles {
        let (near, dist) = ob.nearest(q);
        let d = dist - p.clearance;
        if d < d0 && d > 0.0 {
            let away = (q - near).normalized().unwrap_or(Vec2::ZERO);
            // d/dq ½k(1/d − 1/d0)² = −k(1/d − 1/d0)/d² ∇d
            g -= away * (p.k_rep * (1.0 / d - 1.0 / d0) / (d * d));
        }
    }
    g
}

/// Direction of most negative curvature of the potential, if any.
fn descent_escape(q: Vec2, goal: Vec2, obstacles: &[Obstacle], p: &PlannerParams) -> Option<Vec2> {
    let h = 1e-4;
    let gx = (gradient(q + Vec2::new(h, 0.0), goal, obstacles, p) - gradient(q - Vec2::new(h, 0.0), goal, obstacles, p)) / (2.0 * h);
    let gy = (gradient(q + Vec2::new(0.0, h), goal, obstacles, p) - gradient(q - Vec2::new(0.0, h), goal, obstacles, p)) / (2.0 * h);
    let (a, b, d) = (gx.x, 0.5 * (gx.y + gy.x), gy.y);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let lambda_min = mean - rad;
    if lambda_min >= -1e-9 {
        return None;
    }
    let v = if b.abs() > 1e-12 {
        Vec2::new(lambda_min - d, b)
    } else if a < d {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    let v = v.normalized()?;
    // deterministic side: turn left relative to the goal direction
    let to_goal = goal - q;
    Some(if to_goal.cross(v) >= 0.0 { v } else { -v })
}

/// Gradient descent on the potential from `start` to `goal`, then smoothing and
/// uniform-arclength resampling.
pub fn plan_potential_field(
    start: Vec2,
    goal: Vec2,
    obstacles: &[Obstacle],
    params: &PlannerParams,
    speed: f64,
) -> Result<ReferencePath, PlannerError> {
    params.validate()?;
    if start.distance(goal) <= 1e-12 {
        return Err(PlannerError::DegeneratePath);
    }
    for (which, pt) in [("start", start), ("goal", goal)] {
        for (i, ob) in obstacles.iter().enumerate() {
            if ob.distance(pt) <= params.clearance {
                return Err(PlannerError::BlockedEndpoint { which, obstacle: i, x: pt.x, y: pt.y });
            }
        }
    }

    let mut raw = vec![start];
    let mut q = start;
    let mut best = q.distance(goal);
    let mut since_best = 0usize;
    let stall_window = (10.0 / params.step).ceil() as usize;
    let mut reached = false;
    for _ in 0..params.max_iterations {
        let dist = q.distance(goal);
        if dist < params.goal_tolerance {
            reached = true;
            break;
        }
        let g = gradient(q, goal, obstacles, params);
        let gnorm = g.norm();
        let next = if gnorm < params.grad_tolerance {
            // stationary point: a saddle can be left along negative curvature
            match descent_escape(q, goal, obstacles, params) {
                Some(dir) => q + dir * params.step,
                None => return Err(PlannerError::LocalMinimum { x: q.x, y: q.y, distance: dist }),
            }
        } else {
            // full step where the slope is steep, proportional near stationary points
            let len = params.step * gnorm.min(1.0);
            let mut cand = q - g * (len / gnorm);
            // never step into the inflated obstacles
            let mut shrink = 0;
            while potential(cand, goal, obstacles, params).is_infinite() && shrink < 30 {
                cand = q.lerp(cand, 0.5);
                shrink += 1;
            }
            cand
        };
        q = next;
        raw.push(q);
        let dist = q.distance(goal);
        if dist < best - params.step * 0.5 {
            best = dist;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > stall_window {
                return Err(PlannerError::LocalMinimum { x: q.x, y: q.y, distance: dist });
            }
        }
    }
    if !reached {
        return Err(PlannerError::MaxIterations(params.max_iterations));
    }
    raw.push(goal);

    let smoothed = moving_average(&raw, params.smoothing_window);
    let resampled = resample(&smoothed, params.spacing);
    ReferencePath::new(resampled, speed)
}

/// Centered moving average; the window shrinks near the ends so both endpoints stay fixed.
fn moving_average(points: &[Vec2], window: usize) -> Vec<Vec2> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let slice = &points[i - h..=i + h];
            slice.iter().copied().sum::<Vec2>() / slice.len() as f64
        })
        .collect()
}

/// Points at uniform arclength spacing along the polyline, ending exactly at its last point.
fn resample(points: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(w[1]));
    }
    let total = *cum.last().unwrap();
    let count = (total / spacing).ceil().max(1.0) as usize;
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count + 1);
    let mut seg = 0;
    for k in 0..=count {
        let s = (k as f64 * step).min(total);
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let u = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg].lerp(points[seg + 1], u));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64, speed: f64) -> ReferencePath {
        ReferencePath::new(vec![Vec2::ZERO, Vec2::new(len, 0.0)], speed).unwrap()
    }

    #[test]
    fn query_straight_path() {
        let p = straight(10.0, 1.0);
        let (g, gd) = p.query(3.0);
        assert!((g - Vec2::new(3.0, 0.0)).norm() < 1e-15);
        assert!((gd - Vec2::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(p.query(0.0), (Vec2::ZERO, Vec2::new(1.0, 0.0)));
        assert_eq!(p.query(50.0), (Vec2::new(10.0, 0.0), Vec2::ZERO));
    }

    #[test]
    fn degenerate_paths_rejected() {
        assert_eq!(ReferencePath::new(vec![Vec2::ZERO, Vec2::ZERO], 1.0), Err(PlannerError::DegeneratePath));
        assert_eq!(
            plan_potential_field(Vec2::ZERO, Vec2::ZERO, &[], &PlannerParams::default(), 1.0),
            Err(PlannerError::DegeneratePath)
        );
    }

    #[test]
    fn obstacle_free_plan_is_straight() {
        let goal = Vec2::new(6.0, 3.0);
        let p = plan_potential_field(Vec2::ZERO, goal, &[], &PlannerParams::default(), 1.0).unwrap();
        assert_eq!(p.start(), Vec2::ZERO);
        assert_eq!(p.goal(), goal);
        let line = [Vec2::ZERO, goal];
        for s in p.samples() {
            assert!(distance_point_to_polyline(*s, &line) < 1e-3);
        }
    }

    #[test]
    fn plan_clears_obstacle_on_the_segment() {
        let params = PlannerParams::default();
        let obs = [Obstacle::Circle { center: Vec2::new(5.0, 0.0), radius: 1.0 }];
        let p = plan_potential_field(Vec2::ZERO, Vec2::new(10.0, 0.0), &obs, &params, 1.0).unwrap();
        let min = p.samples().iter().map(|s| obs[0].distance(*s)).fold(f64::INFINITY, f64::min);
        assert!(min >= params.clearance, "min clearance {min}");
        assert!((p.goal() - Vec2::new(10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn enclosed_pocket_is_a_local_minimum() {
        // a cup opening toward the start, goal directly behind it
        let obs = [
            Obstacle::Polygon {
                vertices: vec![Vec2::new(4.0, -3.0), Vec2::new(4.6, -3.0), Vec2::new(4.6, 3.0), Vec2::new(4.0, 3.0)],
            },
            Obstacle::Polygon {
                vertices: vec![Vec2::new(1.0, 2.4), Vec2::new(4.0, 2.4), Vec2::new(4.0, 3.0), Vec2::new(1.0, 3.0)],
            },
            Obstacle::Polygon {
                vertices: vec![Vec2::new(1.0, -3.0), Vec2::new(4.0, -3.0), Vec2::new(4.0, -2.4), Vec2::new(1.0, -2.4)],
            },
        ];
        let r = plan_potential_field(Vec2::ZERO, Vec2::new(8.0, 0.0), &obs, &PlannerParams::default(), 1.0);
        assert!(matches!(r, Err(PlannerError::LocalMinimum { .. })), "{r:?}");
    }

    #[test]
    fn constant_speed_and_lipschitz() {
        let obs = [Obstacle::Circle { center: Vec2::new(4.0, 0.6), radius: 1.0 }];
        let p = plan_potential_field(Vec2::ZERO, Vec2::new(9.0, 0.0), &obs, &PlannerParams::default(), 0.7).unwrap();
        let end = p.duration();
        let mut prev = p.query(0.0).0;
        let dt = 0.01;
        let mut t = dt;
        while t < end + 1.0 {
            let (g, gd) = p.query(t);
            if t < end - 1e-9 {
                assert!((gd.norm() - 0.7).abs() < 1e-12);
            } else {
                assert_eq!(gd, Vec2::ZERO);
            }
            assert!(g.distance(prev) <= 0.7 * dt + 1e-12);
            prev = g;
            t += dt;
        }
    }
}
