//! Experiment description and its JSON file format.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{CoverageGains, DensityField};
use crate::forces::{ForceGains, Obstacle};
use crate::geometry::Vec2;
use crate::leader_network::{MsdParams, MAX_DT};
use crate::path_planner::{PlannerError, PlannerParams, ReferencePath};

pub const SCHEMA_VERSION: u32 = 1;

/// The checked-in reference scenario: ten leaders, twenty followers, two
/// obstacles on either side of the path, 18 s.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.json");

pub fn reference_scenario() -> Scenario {
    Scenario::from_json(REFERENCE_SCENARIO).expect("reference scenario is valid")
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("path file {path}: {source}")]
    PathFile { path: PathBuf, source: PlannerError },
}

fn invalid(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Record every n-th step.
    pub log_stride: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { log_stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub msd: MsdParams,
    pub gains: ForceGains,
    pub coverage: CoverageGains,
    #[serde(default)]
    pub density: DensityField,
    pub follower_count: usize,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub start: Vec2,
    pub goal: Vec2,
    /// Reference speed along the path (m/s).
    pub v_ref: f64,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Virtual cell size; defaults to the spring rest length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_height: Option<f64>,
    #[serde(default)]
    pub planner: PlannerParams,
    /// Precomputed path; skips planning when set. Relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_file: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputOptions,
}

/// A planned path as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    pub samples: Vec<Vec2>,
    pub v_ref: f64,
}

impl PathFile {
    pub fn from_path(path: &ReferencePath) -> Self {
        Self { samples: path.samples().to_vec(), v_ref: path.speed() }
    }

    pub fn to_path(&self) -> Result<ReferencePath, PlannerError> {
        ReferencePath::new(self.samples.clone(), self.v_ref)
    }
}

fn positive(key: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let mut s = Self::from_json(&text)?;
        if let Some(p) = &s.path_file {
            if p.is_relative() {
                s.path_file = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn cell_dims(&self) -> (f64, f64) {
        (
            self.cell_width.unwrap_or(self.msd.rest_length),
            self.cell_height.unwrap_or(self.msd.rest_length),
        )
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        let m = &self.msd;
        positive("msd.mass", m.mass)?;
        positive("msd.damping", m.damping)?;
        positive("msd.stiffness", m.stiffness)?;
        positive("msd.rest_length", m.rest_length)?;
        if m.leader_count < 4 || !m.leader_count.is_multiple_of(2) {
            return Err(invalid("msd.leader_count", format!("must be even and at least 4, got {}", m.leader_count)));
        }
        let g = &self.gains;
        for (key, v) in [
            ("gains.kappa1", g.kappa1),
            ("gains.kappa2", g.kappa2),
            ("gains.kappa3", g.kappa3),
            ("gains.kappa4", g.kappa4),
            ("gains.delta_sensing", g.delta_sensing),
            ("gains.sensing_radius", g.sensing_radius),
        ] {
            positive(key, v)?;
        }
        if g.sensing_radius <= g.delta_sensing {
            return Err(invalid("gains.sensing_radius", "must exceed gains.delta_sensing"));
        }
        positive("coverage.gain", self.coverage.gain)?;
        if self.follower_count == 0 {
            return Err(invalid("follower_count", "must be at least 1"));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate().map_err(|e| invalid(&format!("obstacles[{i}]"), e.to_string()))?;
        }
        for (key, p) in [("start", self.start), ("goal", self.goal)] {
            if !p.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        positive("v_ref", self.v_ref)?;
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(invalid("dt", format!("must be in (0, {MAX_DT}], got {}", self.dt)));
        }
        positive("duration", self.duration)?;
        if self.duration < self.dt {
            return Err(invalid("duration", "must be at least one time step"));
        }
        if let Some(w) = self.cell_width {
            positive("cell_width", w)?;
        }
        if let Some(h) = self.cell_height {
            positive("cell_height", h)?;
        }
        self.planner.validate().map_err(|e| invalid("planner", e.to_string()))?;
        if self.output.log_stride == 0 {
            return Err(invalid("output.log_stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Loads the path file if one is set.
    pub fn load_path(&self) -> Result<Option<ReferencePath>, ScenarioError> {
        let Some(p) = &self.path_file else { return Ok(None) };
        let text = std::fs::read_to_string(p).map_err(|source| ScenarioError::Io { path: p.clone(), source })?;
        let file: PathFile = serde_json::from_str(&text)?;
        file.to_path()
            .map(Some)
            .map_err(|source| ScenarioError::PathFile { path: p.clone(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::CoverageLaw;

    pub(crate) fn sample() -> Scenario {
        Scenario {
            schema_version: SCHEMA_VERSION,
            msd: MsdParams { mass: 1.0, damping: 2.0, stiffness: 20.0, rest_length: 1.0, leader_count: 10 },
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
            follower_count: 20,
            obstacles: vec![Obstacle::Circle { center: Vec2::new(4.0, 1.5), radius: 0.5 }],
            start: Vec2::ZERO,
            goal: Vec2::new(10.0, 0.0),
            v_ref: 0.8,
            dt: 0.01,
            duration: 18.0,
            seed: 7,
            cell_width: None,
            cell_height: Some(1.25),
            planner: PlannerParams::default(),
            path_file: None,
            output: OutputOptions::default(),
        }
    }

    #[test]
    fn json_round_trip() {
        let s = sample();
        let text = s.to_json();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(Scenario::from_json(&back.to_json()).unwrap(), s);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        let err = Scenario::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["gains"]["kappa9"] = serde_json::json!(1);
        let err = Scenario::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("kappa9"), "{err}");
    }

    #[test]
    fn validation_names_the_key() {
        let cases: Vec<(&str, Box<dyn Fn(&mut Scenario)>)> = vec![
            ("dt", Box::new(|s| s.dt = 0.0)),
            ("dt", Box::new(|s| s.dt = 0.1)),
            ("duration", Box::new(|s| s.duration = -1.0)),
            ("follower_count", Box::new(|s| s.follower_count = 0)),
            ("msd.leader_count", Box::new(|s| s.msd.leader_count = 7)),
            ("gains.kappa2", Box::new(|s| s.gains.kappa2 = 0.0)),
            ("gains.sensing_radius", Box::new(|s| s.gains.sensing_radius = 0.05)),
            ("obstacles[0]", Box::new(|s| s.obstacles[0] = Obstacle::Circle { center: Vec2::ZERO, radius: -1.0 })),
            ("schema_version", Box::new(|s| s.schema_version = 99)),
            ("output.log_stride", Box::new(|s| s.output.log_stride = 0)),
        ];
        for (key, mutate) in cases {
            let mut s = sample();
            mutate(&mut s);
            let err = s.validate().unwrap_err();
            assert!(matches!(&err, ScenarioError::Invalid { key: k, .. } if k == key), "{key}: {err}");
        }
    }

    #[test]
    fn reference_parses() {
        let s = reference_scenario();
        assert_eq!(s.msd.leader_count, 10);
        assert_eq!(s.follower_count, 20);
        assert_eq!(s.obstacles.len(), 2);
        assert_eq!(s.duration, 18.0);
    }

    #[test]
    fn defaults_fill_optional_keys() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        let obj = v.as_object_mut().unwrap();
        for k in ["planner", "output", "density", "cell_height", "obstacles"] {
            obj.remove(k);
        }
        let s = Scenario::from_json(&v.to_string()).unwrap();
        assert_eq!(s.output.log_stride, 10);
        assert_eq!(s.cell_dims(), (1.0, 1.0));
        assert!(s.obstacles.is_empty());
        assert_eq!(s.steps(), 1800);
    }
}
