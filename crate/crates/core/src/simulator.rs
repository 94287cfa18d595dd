//! Per-step orchestration of the three control layers.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::coverage::{
    aggregate_error, assign_and_flatten, contain, homography_time_derivative, mesh_homographies, pull_back_velocity,
    random_followers, seam_mismatch, virtual_control, CoverageError, CoverageLaw, FollowerState, VirtualDomain,
    TIME_DERIVATIVE_STEP,
};
use crate::forces::{total_external, ForceError, Obstacle};
use crate::geometry::Vec2;
use crate::leader_network::{self, build_grid_topology, elongation_report, LeaderState, NetworkError, SpringEdge};
use crate::path_planner::{plan_potential_field, PlannerError, ReferencePath};
use crate::scenario::Scenario;

/// Followers start at least this fraction of the rest length apart.
pub const FOLLOWER_SEPARATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Force(#[from] ForceError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

impl SimError {
    /// Short machine-readable name for logs.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Force(ForceError::SafetyBreached { .. }) => "SafetyBreached",
            SimError::Force(_) => "Force",
            SimError::Network(NetworkError::DegenerateMesh { .. }) => "DegenerateMesh",
            SimError::Coverage(CoverageError::DegenerateMesh { .. }) => "DegenerateMesh",
            SimError::Coverage(CoverageError::FollowerEscapedDomain(_)) => "FollowerEscapedDomain",
            SimError::Network(_) => "Network",
            SimError::Coverage(_) => "Coverage",
            SimError::Planner(PlannerError::LocalMinimum { .. }) => "LocalMinimum",
            SimError::Planner(_) => "Planner",
        }
    }
}

/// Static data shared by every step.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub scenario: Scenario,
    pub path: ReferencePath,
    pub edges: Vec<SpringEdge>,
    pub vd: VirtualDomain,
}

impl SimContext {
    pub fn new(scenario: &Scenario, path: ReferencePath) -> Result<Self, SimError> {
        let (w, h) = scenario.cell_dims();
        Ok(Self {
            edges: build_grid_topology(&scenario.msd),
            vd: VirtualDomain::new(scenario.msd.mesh_count(), w, h)?,
            scenario: scenario.clone(),
            path,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub leaders: LeaderState,
    pub followers: FollowerState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub leaders: Vec<Vec2>,
    pub followers: Vec<Vec2>,
    pub followers_virtual: Vec<Vec2>,
    pub e_gamma: f64,
    pub e_c: f64,
    pub max_elong: f64,
    /// `None` when there are no obstacles.
    pub min_obs_dist: Option<f64>,
    pub seam: f64,
    /// Followers projected back into the domain during this step.
    pub projections: usize,
}

/// Rest grid at the path start facing along it, followers scattered inside.
pub fn initial_state(ctx: &SimContext) -> Result<SimState, SimError> {
    let s = &ctx.scenario;
    let leaders = LeaderState::rest_grid(&s.msd, ctx.path.start(), ctx.path.initial_tangent());
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let positions = random_followers(s.follower_count, &leaders, FOLLOWER_SEPARATION * s.msd.rest_length, &mut rng)?;
    let hs = mesh_homographies(&leaders, &ctx.vd)?;
    let followers = assign_and_flatten(&positions, &leaders, &hs, &ctx.vd)?;
    Ok(SimState { step: 0, time: 0.0, leaders, followers })
}

fn min_obstacle_distance(leaders: &LeaderState, obstacles: &[Obstacle]) -> Option<f64> {
    if obstacles.is_empty() {
        return None;
    }
    Some(
        leaders
            .positions
            .iter()
            .flat_map(|x| obstacles.iter().map(move |o| o.distance(*x)))
            .fold(f64::INFINITY, f64::min),
    )
}

/// Metrics of a consistent state.
pub fn compute_metrics(state: &SimState, ctx: &SimContext, projections: usize) -> Result<StepRecord, SimError> {
    let report = elongation_report(&state.leaders, &ctx.edges);
    if !report.flagged.is_empty() {
        warn!("t = {:.3}: springs {:?} exceed the convexity elongation bound", state.time, report.flagged);
    }
    Ok(StepRecord {
        t: state.time,
        leaders: state.leaders.positions.clone(),
        followers: state.followers.positions.clone(),
        followers_virtual: state.followers.virtual_positions.clone(),
        e_gamma: ctx.path.tracking_error(state.leaders.head_center()),
        e_c: aggregate_error(&state.followers.virtual_positions, &ctx.vd, &ctx.scenario.density)?,
        max_elong: report.max_ratio,
        min_obs_dist: min_obstacle_distance(&state.leaders, &ctx.scenario.obstacles),
        seam: seam_mismatch(&state.leaders, &ctx.vd)?,
        projections,
    })
}

/// Details of the follower update, kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerUpdate {
    pub law_used: CoverageLaw,
    pub topology_fallback: bool,
}

/// Advances the state by one time step.
///
/// Followers are controlled in the start-of-step meshes, where their virtual
/// positions are consistent. The mesh motion used for the pull-back is the one
/// the semi-implicit leader step actually applies: old positions moved with
/// the new velocities.
pub fn step_sim(state: &SimState, ctx: &SimContext) -> Result<(SimState, StepRecord, FollowerUpdate), SimError> {
    let s = &ctx.scenario;
    let dt = s.dt;
    let (gamma, gamma_dot) = ctx.path.query(state.time);
    let external = total_external(&state.leaders, &s.obstacles, gamma, gamma_dot, &s.gains)?;
    let mut leaders = leader_network::step(&state.leaders, &external, &ctx.edges, &s.msd, dt)?;
    let step = state.step + 1;
    let time = step as f64 * dt;
    leaders.time = time;

    let hs_next = mesh_homographies(&leaders, &ctx.vd)?;
    let hs = mesh_homographies(&state.leaders, &ctx.vd)?;
    let flat = &state.followers;
    let control = virtual_control(&flat.virtual_positions, &ctx.vd, &s.density, &s.coverage)?;

    let moving = LeaderState { velocities: leaders.velocities.clone(), ..state.leaders.clone() };
    let meshes = leaders.meshes()?;
    let mut projections = 0;
    let mut positions = Vec::with_capacity(flat.positions.len());
    for i in 0..flat.positions.len() {
        let (p, h) = (flat.positions[i], flat.mesh_index[i]);
        let dtdt = homography_time_derivative(&hs[h], &moving, h, &ctx.vd, p, TIME_DERIVATIVE_STEP)?;
        let u = pull_back_velocity(p, &hs[h], dtdt, control.velocities[i])?;
        let (q, moved) = contain(p + u * dt, &meshes);
        projections += usize::from(moved);
        positions.push(q);
    }
    let followers = assign_and_flatten(&positions, &leaders, &hs_next, &ctx.vd)?;
    let next = SimState { step, time, leaders, followers };
    let record = compute_metrics(&next, ctx, projections)?;
    let update = FollowerUpdate { law_used: control.law_used, topology_fallback: control.topology_fallback };
    Ok((next, record, update))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fault {
    pub t: f64,
    pub step: usize,
    pub kind: String,
    pub message: String,
    /// Leader positions and velocities, followers, at the last good step.
    pub leaders: Vec<Vec2>,
    pub leader_velocities: Vec<Vec2>,
    pub followers: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub completed: bool,
    pub steps: usize,
    pub final_time: f64,
    /// Smallest leader-obstacle distance over every step; `None` without obstacles.
    pub min_obstacle_distance: Option<f64>,
    pub max_elongation: f64,
    pub final_e_gamma: f64,
    pub initial_e_c: f64,
    /// Mean of E_c over the last 10% of steps. E_c is the sum over followers.
    pub mean_e_c_final_10pct: f64,
    pub projections: usize,
    pub follower_steps: usize,
    pub topology_fallbacks: usize,
    pub max_seam: f64,
    pub fault: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Strided records, always including t = 0.
    pub records: Vec<StepRecord>,
    pub summary: Summary,
    pub fault: Option<Fault>,
}

/// Plans (or loads) the path and runs the scenario to completion or the first fault.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, SimError> {
    let path = match scenario.load_path() {
        Ok(Some(p)) => p,
        Ok(None) => plan_potential_field(scenario.start, scenario.goal, &scenario.obstacles, &scenario.planner, scenario.v_ref)?,
        Err(e) => return Err(SimError::Planner(PlannerError::InvalidParams(e.to_string()))),
    };
    run_with_path(scenario, path, scenario.output.log_stride, |_| {})
}

/// Runs with a given path. `observe` sees every step's record, strided or not.
pub fn run_with_path(
    scenario: &Scenario,
    path: ReferencePath,
    stride: usize,
    mut observe: impl FnMut(&StepRecord),
) -> Result<RunOutcome, SimError> {
    let stride = stride.max(1);
    let ctx = SimContext::new(scenario, path)?;
    let mut state = initial_state(&ctx)?;
    let first = compute_metrics(&state, &ctx, 0)?;
    observe(&first);

    let total = scenario.steps();
    let tail_start = total - total / 10;
    let mut summary = Summary {
        completed: false,
        steps: 0,
        final_time: 0.0,
        min_obstacle_distance: first.min_obs_dist,
        max_elongation: first.max_elong,
        final_e_gamma: first.e_gamma,
        initial_e_c: first.e_c,
        mean_e_c_final_10pct: 0.0,
        projections: 0,
        follower_steps: 0,
        topology_fallbacks: 0,
        max_seam: first.seam,
        fault: None,
    };
    let mut records = vec![first];
    let mut tail_sum = 0.0;
    let mut fault = None;
    for k in 1..=total {
        match step_sim(&state, &ctx) {
            Ok((next, record, update)) => {
                observe(&record);
                summary.steps = k;
                summary.final_time = record.t;
                summary.min_obstacle_distance = match (summary.min_obstacle_distance, record.min_obs_dist) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                summary.max_elongation = summary.max_elongation.max(record.max_elong);
                summary.final_e_gamma = record.e_gamma;
                summary.projections += record.projections;
                summary.follower_steps += record.followers.len();
                summary.topology_fallbacks += usize::from(update.topology_fallback);
                summary.max_seam = summary.max_seam.max(record.seam);
                if k > tail_start {
                    tail_sum += record.e_c;
                }
                if k % stride == 0 {
                    records.push(record);
                }
                state = next;
            }
            Err(e) => {
                summary.fault = Some(e.to_string());
                fault = Some(Fault {
                    t: (k as f64) * scenario.dt,
                    step: k,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                    leaders: state.leaders.positions.clone(),
                    leader_velocities: state.leaders.velocities.clone(),
                    followers: state.followers.positions.clone(),
                });
                break;
            }
        }
    }
    summary.completed = fault.is_none();
    let tail_len = total - tail_start;
    if summary.completed && tail_len > 0 {
        summary.mean_e_c_final_10pct = tail_sum / tail_len as f64;
    }
    Ok(RunOutcome { records, summary, fault })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::{centroids, CoverageGains, DensityField};
    use crate::forces::ForceGains;
    use crate::leader_network::MsdParams;
    use crate::path_planner::PlannerParams;
    use crate::scenario::{OutputOptions, SCHEMA_VERSION};

    fn scenario() -> Scenario {
        Scenario {
            schema_version: SCHEMA_VERSION,
            msd: MsdParams { mass: 1.0, damping: 2.0, stiffness: 20.0, rest_length: 1.0, leader_count: 6 },
            gains: ForceGains {
                kappa1: 0.5,
                kappa2: 1.0,
                kappa3: 1.0,
                kappa4: 1.0,
                delta_sensing: 0.1,
                sensing_radius: 1.0,
            },
            coverage: CoverageGains { gain: 1.0, law: CoverageLaw::Exact },
            density: DensityField::Uniform,
            follower_count: 6,
            obstacles: vec![],
            start: Vec2::ZERO,
            goal: Vec2::new(3.0, 0.0),
            v_ref: 0.5,
            dt: 0.01,
            duration: 1.0,
            seed: 3,
            cell_width: None,
            cell_height: None,
            planner: PlannerParams::default(),
            path_file: None,
            output: OutputOptions { log_stride: 10 },
        }
    }

    #[test]
    fn zero_gains_keep_leaders_still_and_followers_run_lloyd() {
        let mut s = scenario();
        s.gains.kappa2 = 1e-300;
        s.gains.kappa4 = 1e-300;
        s.coverage.law = CoverageLaw::Lloyd;
        // a path of zero speed keeps the feedforward at zero
        let path = ReferencePath::new(vec![Vec2::ZERO, Vec2::new(3.0, 0.0)], 1e-300).unwrap();
        let ctx = SimContext::new(&s, path).unwrap();
        let st = initial_state(&ctx).unwrap();
        let (next, rec, _) = step_sim(&st, &ctx).unwrap();
        for (a, b) in st.leaders.positions.iter().zip(&next.leaders.positions) {
            assert!(a.distance(*b) < 1e-12);
        }
        let c = centroids(&st.followers.virtual_positions, &ctx.vd, &s.density).unwrap();
        for i in 0..6 {
            let expect = st.followers.virtual_positions[i] + (c[i] - st.followers.virtual_positions[i]) * s.dt;
            assert!(next.followers.virtual_positions[i].distance(expect) < 1e-9);
        }
        assert_eq!(rec.projections, 0);
        assert_eq!(rec.min_obs_dist, None);
    }

    #[test]
    fn straight_run_completes_and_records_stride() {
        let s = scenario();
        let out = run(&s).unwrap();
        assert!(out.summary.completed, "{:?}", out.summary.fault);
        assert_eq!(out.records.len(), 100 / 10 + 1);
        assert_eq!(out.records[0].t, 0.0);
        assert!(out.records.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(out.summary.min_obstacle_distance, None);
        assert!(out.summary.final_e_gamma < 1e-9);
    }

    #[test]
    fn runs_are_deterministic() {
        let s = scenario();
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn metrics_match_recomputation() {
        let s = scenario();
        let ctx = SimContext::new(&s, plan_potential_field(s.start, s.goal, &[], &s.planner, s.v_ref).unwrap()).unwrap();
        let mut st = initial_state(&ctx).unwrap();
        for _ in 0..30 {
            st = step_sim(&st, &ctx).unwrap().0;
        }
        let rec = compute_metrics(&st, &ctx, 0).unwrap();
        let c = centroids(&rec.followers_virtual, &ctx.vd, &s.density).unwrap();
        let e_c: f64 = rec.followers_virtual.iter().zip(&c).map(|(p, c)| p.distance(*c)).sum();
        assert!((e_c - rec.e_c).abs() < 1e-12);
        let head = (rec.leaders[0] + rec.leaders[1]) * 0.5;
        assert!((head.y.abs() - rec.e_gamma).abs() < 1e-12);
    }

    #[test]
    fn safety_breach_halts_with_fault() {
        let mut s = scenario();
        // leader 0 starts at (0, -0.5), 0.2 m from the obstacle surface
        s.obstacles = vec![Obstacle::Circle { center: Vec2::new(0.0, -1.0), radius: 0.3 }];
        s.gains.delta_sensing = 0.5;
        let path = ReferencePath::new(vec![Vec2::ZERO, Vec2::new(3.0, 0.0)], 0.5).unwrap();
        let out = run_with_path(&s, path, 1, |_| {}).unwrap();
        let fault = out.fault.expect("fault");
        assert_eq!(fault.kind, "SafetyBreached");
        assert_eq!(fault.step, 1);
        assert!(!out.summary.completed);
    }
}
