use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use corral::path_planner::plan_potential_field;
use corral::runlog::parse_log;
use corral::scenario::{reference_scenario, PathFile, Scenario};
use serde_json::json;
use tempfile::TempDir;

fn corral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corral")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, s.to_json()).unwrap();
    p
}

fn short_reference(duration: f64) -> Scenario {
    let mut s = reference_scenario();
    s.duration = duration;
    s
}

fn run_into(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    corral(&args)
}

#[test]
fn reference_run_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let s = reference_scenario();
    let sc = write_scenario(dir.path(), "reference.json", &s);
    let out = dir.path().join("out");
    let o = run_into(&sc, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["run.jsonl", "summary.json", "metrics.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows, (s.duration / s.dt).round() as usize / s.output.log_stride + 1);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], json!(true));
    assert_eq!(summary["steps"], json!(1800));

    let log = parse_log(&fs::read_to_string(out.join("run.jsonl")).unwrap()).unwrap();
    assert_eq!(log.records.len(), rows);
    assert!(log.fault.is_none());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &short_reference(3.0));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_into(&sc, &a, &[])), 0);
    assert_eq!(code(&run_into(&sc, &b, &[])), 0);
    for f in ["run.jsonl", "summary.json", "metrics.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_and_stride_overrides() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &short_reference(1.0));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_into(&sc, &a, &["--log-stride", "25"])), 0);
    assert_eq!(code(&run_into(&sc, &b, &["--seed", "99"])), 0);
    let rows = |d: &Path| fs::read_to_string(d.join("metrics.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows(&a), 100 / 25 + 1);
    assert_eq!(rows(&b), 100 / 10 + 1);
    let first = |d: &Path| parse_log(&fs::read_to_string(d.join("run.jsonl")).unwrap()).unwrap().records[0].followers.clone();
    assert_ne!(first(&a), first(&b));
    assert_eq!(code(&run_into(&sc, &a, &["--log-stride", "0"])), 1);
}

#[test]
fn zero_dt_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut s = short_reference(1.0);
    s.dt = 0.0;
    let p = write_scenario(dir.path(), "bad.json", &s);
    let o = run_into(&p, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&short_reference(1.0).to_json()).unwrap();
    v["gains"]["kappa_5"] = json!(1.0);
    let p = dir.path().join("bad.json");
    fs::write(&p, v.to_string()).unwrap();
    let o = run_into(&p, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("kappa_5"), "{}", stderr(&o));
}

#[test]
fn safety_breach_exits_2_with_fault_record() {
    let dir = TempDir::new().unwrap();
    let mut s = short_reference(2.0);
    // the sensing margin is wider than the gap between the top rail and the obstacle
    s.gains.delta_sensing = 0.5;
    s.obstacles = vec![corral::forces::Obstacle::Circle { center: corral::Vec2::new(-1.0, 0.9), radius: 0.3 }];
    let path = PathFile { samples: vec![corral::Vec2::ZERO, corral::Vec2::new(10.0, 0.0)], v_ref: 1.0 };
    fs::write(dir.path().join("straight.json"), serde_json::to_string(&path).unwrap()).unwrap();
    s.path_file = Some("straight.json".into());
    let sc = write_scenario(dir.path(), "s.json", &s);
    let out = dir.path().join("out");
    let o = run_into(&sc, &out, &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("SafetyBreached"), "{}", stderr(&o));
    let log = parse_log(&fs::read_to_string(out.join("run.jsonl")).unwrap()).unwrap();
    assert_eq!(log.fault.unwrap().kind, "SafetyBreached");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], json!(false));
}

#[test]
fn plan_round_trips_through_path_file() {
    let dir = TempDir::new().unwrap();
    let s = reference_scenario();
    let sc = write_scenario(dir.path(), "s.json", &s);
    let pf = dir.path().join("path.json");
    let o = corral(&["plan", "--scenario", sc.to_str().unwrap(), "--out", pf.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut with_file = s.clone();
    with_file.path_file = Some("path.json".into());
    let loaded = Scenario::load(&write_scenario(dir.path(), "t.json", &with_file)).unwrap().load_path().unwrap().unwrap();
    let planned = plan_potential_field(s.start, s.goal, &s.obstacles, &s.planner, s.v_ref).unwrap();
    for k in 0..=400 {
        let t = k as f64 * 0.05;
        assert_eq!(loaded.query(t), planned.query(t), "t = {t}");
    }
}

#[test]
fn plan_without_obstacles_is_straight() {
    let dir = TempDir::new().unwrap();
    let mut s = reference_scenario();
    s.obstacles.clear();
    let sc = write_scenario(dir.path(), "s.json", &s);
    let pf = dir.path().join("path.json");
    assert_eq!(code(&corral(&["plan", "--scenario", sc.to_str().unwrap(), "--out", pf.to_str().unwrap()])), 0);
    let file: PathFile = serde_json::from_str(&fs::read_to_string(&pf).unwrap()).unwrap();
    assert!(file.samples.len() >= 2);
    assert!(file.samples.iter().all(|p| p.y.abs() < 1e-12));
}

#[test]
fn plan_into_a_pocket_exits_2() {
    use corral::forces::Obstacle;
    use corral::Vec2;
    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| Obstacle::Polygon {
        vertices: vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)],
    };
    let dir = TempDir::new().unwrap();
    let mut s = reference_scenario();
    s.goal = Vec2::new(8.0, 0.0);
    s.obstacles = vec![rect(4.0, -3.0, 4.6, 3.0), rect(1.0, 2.4, 4.0, 3.0), rect(1.0, -3.0, 4.0, -2.4)];
    let sc = write_scenario(dir.path(), "s.json", &s);
    let o = corral(&["plan", "--scenario", sc.to_str().unwrap(), "--out", dir.path().join("p.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("LocalMinimum"), "{}", stderr(&o));
}

fn assert_xml(p: &Path) {
    let text = fs::read_to_string(p).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

#[test]
fn plot_writes_frames_and_metrics() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &reference_scenario());
    let out = dir.path().join("out");
    assert_eq!(code(&run_into(&sc, &out, &[])), 0);
    let figs = dir.path().join("figs");
    let o = corral(&[
        "plot",
        "--log",
        out.join("run.jsonl").to_str().unwrap(),
        "--out",
        figs.to_str().unwrap(),
        "--frames",
        "3,6,14,18",
        "--scenario",
        sc.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&figs).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["frame_14.svg", "frame_18.svg", "frame_3.svg", "frame_6.svg", "metrics.svg"]);
    for n in names {
        assert_xml(&figs.join(n));
    }

    // without the scenario the frames still render, minus obstacles and path
    let bare = dir.path().join("bare");
    let o = corral(&["plot", "--log", out.join("run.jsonl").to_str().unwrap(), "--out", bare.to_str().unwrap(), "--frames", "9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_xml(&bare.join("frame_9.svg"));

    let o = corral(&["plot", "--log", out.join("run.jsonl").to_str().unwrap(), "--out", bare.to_str().unwrap(), "--frames", "18.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("outside the log"), "{}", stderr(&o));
}

#[test]
fn plot_rejects_empty_log() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("run.jsonl");
    fs::write(&log, "").unwrap();
    let o = corral(&["plot", "--log", log.to_str().unwrap(), "--out", dir.path().join("f").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("malformed log"), "{}", stderr(&o));
}

#[test]
fn check_suites() {
    let o = corral(&["check", "--suite", "energy"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().all(|l| l.starts_with("PASS")), "{table}");
    assert_eq!(code(&corral(&["check", "--suite", "nope"])), 1);
}
