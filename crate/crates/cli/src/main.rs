//! `corral`: run, plan, plot and self-check leader-follower scenarios.
//!
//! Exit codes: 0 ok, 1 configuration or input error, 2 simulation fault.

mod svg;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corral::path_planner::{plan_potential_field, ReferencePath};
use corral::runlog::{parse_log, write_log, write_metrics_csv, LogError};
use corral::scenario::{PathFile, Scenario, ScenarioError};
use corral::selfcheck::run_suite;
use corral::simulator::{run_with_path, SimError};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "corral", version, about = "Leader-follower coverage in deforming domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario; writes run.jsonl, summary.json and metrics.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output.log_stride.
        #[arg(long)]
        log_stride: Option<usize>,
    },
    /// Plan the reference path only and write it as a path file.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render metrics.svg and frame_<t>.svg from a run log.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frame times in seconds.
        #[arg(long, value_delimiter = ',')]
        frames: Vec<f64>,
        /// Scenario of the run, for obstacles, reference path and cell size.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run a self-check suite: energy, geometry, coverage, e2e or all.
    Check {
        #[arg(long)]
        suite: String,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("frame time {t} s is outside the log ({first} s to {last} s)")]
    FrameTimeOutOfRange { t: f64, first: f64, last: f64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{kind}: {message}")]
    Fault { kind: String, message: String },
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Fault { .. } | CliError::ChecksFailed(_) => 2,
            _ => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Fault { kind: e.kind().to_string(), message: e.to_string() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn plan(s: &Scenario) -> Result<ReferencePath, CliError> {
    match s.load_path()? {
        Some(p) => Ok(p),
        None => Ok(plan_potential_field(s.start, s.goal, &s.obstacles, &s.planner, s.v_ref).map_err(SimError::from)?),
    }
}

fn cmd_run(scenario: &Path, out: &Path, seed: Option<u64>, stride: Option<usize>) -> Result<(), CliError> {
    let mut s = Scenario::load(scenario)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(stride) = stride {
        s.output.log_stride = stride;
    }
    s.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = plan(&s)?;
    let outcome = run_with_path(&s, path, s.output.log_stride, |_| {})?;

    let log_path = out.join("run.jsonl");
    let mut w = create(&log_path)?;
    write_log(&mut w, &outcome.records, outcome.fault.as_ref()).map_err(io_err(&log_path))?;
    w.flush().map_err(io_err(&log_path))?;

    let csv_path = out.join("metrics.csv");
    let mut w = create(&csv_path)?;
    write_metrics_csv(&mut w, &outcome.records).map_err(io_err(&csv_path))?;
    w.flush().map_err(io_err(&csv_path))?;

    let summary_path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    fs::write(&summary_path, text + "\n").map_err(io_err(&summary_path))?;

    let s = &outcome.summary;
    println!(
        "{} steps, t = {:.2} s, max elongation {:.4}, min obstacle distance {}, final E_gamma {:.4}",
        s.steps,
        s.final_time,
        s.max_elongation,
        s.min_obstacle_distance.map_or("n/a".into(), |d| format!("{d:.4}")),
        s.final_e_gamma
    );
    match outcome.fault {
        Some(f) => Err(CliError::Fault { kind: f.kind, message: format!("at t = {:.3} s: {}", f.t, f.message) }),
        None => Ok(()),
    }
}

fn cmd_plan(scenario: &Path, out: &Path) -> Result<(), CliError> {
    let s = Scenario::load(scenario)?;
    let path = plan_potential_field(s.start, s.goal, &s.obstacles, &s.planner, s.v_ref).map_err(SimError::from)?;
    let text = serde_json::to_string_pretty(&PathFile::from_path(&path)).expect("path serializes");
    fs::write(out, text + "\n").map_err(io_err(out))?;
    println!("{} samples, {:.3} m", path.samples().len(), path.total_length());
    Ok(())
}

fn frame_name(t: f64) -> String {
    format!("frame_{t}.svg")
}

fn cmd_plot(log: &Path, out: &Path, frames: &[f64], scenario: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(log).map_err(io_err(log))?;
    let log = parse_log(&text)?;
    let records = &log.records;
    let (first, last) = (records[0].t, records.last().unwrap().t);
    // validate every frame before writing anything
    let mut picks = Vec::with_capacity(frames.len());
    for &t in frames {
        if !(t.is_finite() && t >= first - 1e-9 && t <= last + 1e-9) {
            return Err(CliError::FrameTimeOutOfRange { t, first, last });
        }
        let idx = (0..records.len()).min_by(|&a, &b| (records[a].t - t).abs().total_cmp(&(records[b].t - t).abs())).unwrap();
        picks.push((t, idx));
    }
    let scene = match scenario {
        Some(p) => {
            let s = Scenario::load(p)?;
            if s.msd.leader_count != records[0].leaders.len() {
                return Err(CliError::Config(format!(
                    "scenario has {} leaders but the log has {}",
                    s.msd.leader_count,
                    records[0].leaders.len()
                )));
            }
            let path = plan(&s).ok().map(|p| p.samples().to_vec()).unwrap_or_default();
            svg::Scene { obstacles: s.obstacles.clone(), path, cell: Some(s.cell_dims()) }
        }
        None => svg::Scene::default(),
    };
    fs::create_dir_all(out).map_err(io_err(out))?;
    let p = out.join("metrics.svg");
    fs::write(&p, svg::metrics_svg(records)).map_err(io_err(&p))?;
    for (t, idx) in picks {
        let p = out.join(frame_name(t));
        fs::write(&p, svg::frame_svg(records, idx, &scene)).map_err(io_err(&p))?;
    }
    println!("wrote metrics.svg and {} frame(s) to {}", frames.len(), out.display());
    Ok(())
}

fn cmd_check(suite: &str) -> Result<(), CliError> {
    let checks = run_suite(suite).map_err(|e| CliError::Config(e.to_string()))?;
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!("{}  {:width$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match checks.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        n => Err(CliError::ChecksFailed(n)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out, seed, log_stride } => cmd_run(scenario, out, *seed, *log_stride),
        Command::Plan { scenario, out } => cmd_plan(scenario, out),
        Command::Plot { log, out, frames, scenario } => cmd_plot(log, out, frames, scenario.as_deref()),
        Command::Check { suite } => cmd_check(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
