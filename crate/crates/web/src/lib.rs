//! Browser bindings: step the reference simulation, explore Voronoi/Lloyd
//! on a rectangle, and warp a grid through a four-corner homography.
//!
//! Each binding is a thin wrapper over a plain Rust function returning
//! `Result<_, String>`, which is what the native tests exercise.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use corral::forces::Obstacle;
use corral::geometry::{bounded_voronoi, homography_from_quads, ConvexQuad, Rect};
use corral::path_planner::plan_potential_field;
use corral::scenario::{reference_scenario, Scenario};
use corral::simulator::{compute_metrics, initial_state, step_sim, SimContext, SimState, StepRecord};
use corral::Vec2;

fn pairs(flat: &[f64]) -> Result<Vec<Vec2>, String> {
    if !flat.len().is_multiple_of(2) {
        return Err(format!("expected x,y pairs, got {} numbers", flat.len()));
    }
    Ok(flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Static parts of a scenario for drawing.
#[derive(Debug, Clone, Serialize)]
pub struct SceneView {
    pub obstacles: Vec<Obstacle>,
    pub path: Vec<Vec2>,
    pub virtual_width: f64,
    pub virtual_height: f64,
    pub cell_width: f64,
    pub duration: f64,
}

/// A running simulation that keeps only the latest state.
pub struct Demo {
    ctx: SimContext,
    state: SimState,
    last: StepRecord,
    fault: Option<String>,
}

impl Demo {
    pub fn new(s: &Scenario) -> Result<Self, String> {
        let path =
            plan_potential_field(s.start, s.goal, &s.obstacles, &s.planner, s.v_ref).map_err(|e| e.to_string())?;
        let ctx = SimContext::new(s, path).map_err(|e| e.to_string())?;
        let state = initial_state(&ctx).map_err(|e| e.to_string())?;
        let last = compute_metrics(&state, &ctx, 0).map_err(|e| e.to_string())?;
        Ok(Self { ctx, state, last, fault: None })
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        Self::new(&Scenario::from_json(text).map_err(|e| e.to_string())?)
    }

    /// Advances up to `steps` steps; false once the run has ended or faulted.
    pub fn advance(&mut self, steps: usize) -> bool {
        let total = self.ctx.scenario.steps();
        for _ in 0..steps {
            if self.fault.is_some() || self.state.step >= total {
                return false;
            }
            match step_sim(&self.state, &self.ctx) {
                Ok((next, record, _)) => {
                    self.state = next;
                    self.last = record;
                }
                Err(e) => self.fault = Some(format!("{}: {e}", e.kind())),
            }
        }
        self.fault.is_none() && self.state.step < total
    }

    pub fn record(&self) -> &StepRecord {
        &self.last
    }

    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn scene(&self) -> SceneView {
        let vd = &self.ctx.vd;
        SceneView {
            obstacles: self.ctx.scenario.obstacles.clone(),
            path: self.ctx.path.samples().to_vec(),
            virtual_width: vd.rect.width,
            virtual_height: vd.rect.height,
            cell_width: vd.cell_width,
            duration: self.ctx.scenario.duration,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvtView {
    pub cells: Vec<Vec<Vec2>>,
    pub centroids: Vec<Vec2>,
    /// Σ‖C_i − p_i‖.
    pub error: f64,
}

fn domain(width: f64, height: f64) -> Result<Rect, String> {
    Rect::new(Vec2::ZERO, width, height).map_err(|e| e.to_string())
}

/// Voronoi cells and centroids of `points` (flat x,y pairs) in [0,w]×[0,h].
pub fn cvt_view(points: &[f64], width: f64, height: f64) -> Result<CvtView, String> {
    let pts = pairs(points)?;
    let cells = bounded_voronoi(&pts, &domain(width, height)?).map_err(|e| e.to_string())?;
    let centroids = cells.iter().map(|c| c.centroid().map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    let error = pts.iter().zip(&centroids).map(|(p, c)| p.distance(*c)).sum();
    Ok(CvtView { cells: cells.into_iter().map(|c| c.vertices).collect(), centroids, error })
}

/// One explicit step of `ṗ = k (C − p)`; `k·dt = 1` is a plain Lloyd iteration.
pub fn lloyd(points: &[f64], width: f64, height: f64, k_dt: f64) -> Result<Vec<f64>, String> {
    let pts = pairs(points)?;
    let view = cvt_view(points, width, height)?;
    Ok(pts
        .iter()
        .zip(&view.centroids)
        .flat_map(|(p, c)| {
            let q = *p + (*c - *p) * k_dt;
            [q.x, q.y]
        })
        .collect())
}

/// Images of an `n`×`n` grid on the unit square under the homography that
/// sends the unit square to `quad` (four counterclockwise corners, flat).
/// Returns `2(n+1)` polylines, rows first.
pub fn warp(quad: &[f64], n: usize, samples: usize) -> Result<Vec<Vec<Vec2>>, String> {
    let v = pairs(quad)?;
    let v: [Vec2; 4] = v.try_into().map_err(|_| "need exactly four corners".to_string())?;
    let dst = ConvexQuad::new(v).map_err(|e| e.to_string())?;
    let src = ConvexQuad::new([Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)])
        .expect("unit square");
    let h = homography_from_quads(&src, &dst).map_err(|e| e.to_string())?;
    let (n, samples) = (n.max(1), samples.max(2));
    let mut lines = Vec::with_capacity(2 * (n + 1));
    for transpose in [false, true] {
        for i in 0..=n {
            let a = i as f64 / n as f64;
            let line = (0..samples)
                .map(|j| {
                    let b = j as f64 / (samples - 1) as f64;
                    let p = if transpose { Vec2::new(a, b) } else { Vec2::new(b, a) };
                    h.apply(p).map_err(|e| e.to_string())
                })
                .collect::<Result<Vec<_>, _>>()?;
            lines.push(line);
        }
    }
    Ok(lines)
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct Simulation(Demo);

#[wasm_bindgen]
impl Simulation {
    /// Builds from scenario JSON; an empty string loads the reference scenario.
    #[wasm_bindgen(constructor)]
    pub fn new(scenario_json: &str) -> Result<Simulation, JsError> {
        let demo = if scenario_json.trim().is_empty() {
            Demo::new(&reference_scenario())
        } else {
            Demo::from_json(scenario_json)
        };
        demo.map(Simulation).map_err(js)
    }

    pub fn advance(&mut self, steps: usize) -> bool {
        self.0.advance(steps)
    }

    /// Latest record as JSON (same fields as a run log line).
    pub fn frame_json(&self) -> String {
        to_json(self.0.record())
    }

    pub fn scene_json(&self) -> String {
        to_json(&self.0.scene())
    }

    pub fn fault(&self) -> Option<String> {
        self.0.fault().map(str::to_string)
    }
}

#[wasm_bindgen]
pub fn reference_scenario_json() -> String {
    reference_scenario().to_json()
}

#[wasm_bindgen]
pub fn voronoi_json(points: &[f64], width: f64, height: f64) -> Result<String, JsError> {
    cvt_view(points, width, height).map(|v| to_json(&v)).map_err(js)
}

#[wasm_bindgen]
pub fn lloyd_step(points: &[f64], width: f64, height: f64, k_dt: f64) -> Result<Vec<f64>, JsError> {
    lloyd(points, width, height, k_dt).map_err(js)
}

#[wasm_bindgen]
pub fn warp_grid_json(quad: &[f64], n: usize, samples: usize) -> Result<String, JsError> {
    warp(quad, n, samples).map(|l| to_json(&l)).map_err(js)
}
