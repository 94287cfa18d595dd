//! Text formats for run output: JSON-lines trajectory log and metrics CSV.
//!
//! Floats are written with 17 significant digits so every value parses back
//! to the identical `f64`.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::Vec2;
use crate::simulator::{Fault, StepRecord};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("malformed log: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn push_f64(out: &mut String, v: f64) {
    if v.is_finite() {
        write!(out, "{v:.16e}").unwrap();
    } else {
        out.push_str("null");
    }
}

fn push_points(out: &mut String, pts: &[Vec2]) {
    out.push('[');
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        push_f64(out, p.x);
        out.push(',');
        push_f64(out, p.y);
        out.push(']');
    }
    out.push(']');
}

fn push_key(out: &mut String, key: &str) {
    if !out.ends_with('{') {
        out.push(',');
    }
    write!(out, "\"{key}\":").unwrap();
}

/// One log line, without the trailing newline.
pub fn format_record(r: &StepRecord) -> String {
    let mut s = String::from("{");
    push_key(&mut s, "t");
    push_f64(&mut s, r.t);
    push_key(&mut s, "leaders");
    push_points(&mut s, &r.leaders);
    push_key(&mut s, "followers");
    push_points(&mut s, &r.followers);
    push_key(&mut s, "followers_virtual");
    push_points(&mut s, &r.followers_virtual);
    push_key(&mut s, "e_gamma");
    push_f64(&mut s, r.e_gamma);
    push_key(&mut s, "e_c");
    push_f64(&mut s, r.e_c);
    push_key(&mut s, "max_elong");
    push_f64(&mut s, r.max_elong);
    push_key(&mut s, "min_obs_dist");
    match r.min_obs_dist {
        Some(d) => push_f64(&mut s, d),
        None => s.push_str("null"),
    }
    push_key(&mut s, "seam");
    push_f64(&mut s, r.seam);
    push_key(&mut s, "projections");
    write!(s, "{}", r.projections).unwrap();
    s.push('}');
    s
}

/// The fault line appended when a run halts.
pub fn format_fault(f: &Fault) -> String {
    let mut s = String::from("{\"fault\":{");
    push_key(&mut s, "t");
    push_f64(&mut s, f.t);
    push_key(&mut s, "step");
    write!(s, "{}", f.step).unwrap();
    push_key(&mut s, "kind");
    s.push_str(&serde_json::to_string(&f.kind).unwrap());
    push_key(&mut s, "message");
    s.push_str(&serde_json::to_string(&f.message).unwrap());
    push_key(&mut s, "leaders");
    push_points(&mut s, &f.leaders);
    push_key(&mut s, "leader_velocities");
    push_points(&mut s, &f.leader_velocities);
    push_key(&mut s, "followers");
    push_points(&mut s, &f.followers);
    s.push_str("}}");
    s
}

pub fn write_log<W: Write>(mut w: W, records: &[StepRecord], fault: Option<&Fault>) -> io::Result<()> {
    for r in records {
        writeln!(w, "{}", format_record(r))?;
    }
    if let Some(f) = fault {
        writeln!(w, "{}", format_fault(f))?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[StepRecord]) -> io::Result<()> {
    writeln!(w, "t,e_gamma,e_c,max_elong,min_obs_dist")?;
    for r in records {
        let mut line = String::new();
        for (i, v) in [r.t, r.e_gamma, r.e_c, r.max_elong, r.min_obs_dist.unwrap_or(f64::INFINITY)].iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            if v.is_finite() {
                write!(line, "{v:.16e}").unwrap();
            } else {
                line.push_str("inf");
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    t: f64,
    leaders: Vec<Vec2>,
    followers: Vec<Vec2>,
    followers_virtual: Vec<Vec2>,
    e_gamma: f64,
    e_c: f64,
    max_elong: f64,
    min_obs_dist: Option<f64>,
    seam: f64,
    projections: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    t: f64,
    step: usize,
    kind: String,
    message: String,
    leaders: Vec<Vec2>,
    leader_velocities: Vec<Vec2>,
    followers: Vec<Vec2>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultLine {
    fault: RawFault,
}

/// A parsed log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub fault: Option<Fault>,
}

pub fn parse_log(text: &str) -> Result<RunLog, LogError> {
    let mut records: Vec<StepRecord> = Vec::new();
    let mut fault = None;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let lineno = n + 1;
        if fault.is_some() {
            return Err(LogError::Malformed(format!("line {lineno}: record after fault")));
        }
        if line.starts_with("{\"fault\"") {
            let f: FaultLine =
                serde_json::from_str(line).map_err(|e| LogError::Malformed(format!("line {lineno}: {e}")))?;
            let f = f.fault;
            fault = Some(Fault {
                t: f.t,
                step: f.step,
                kind: f.kind,
                message: f.message,
                leaders: f.leaders,
                leader_velocities: f.leader_velocities,
                followers: f.followers,
            });
            continue;
        }
        let r: RawRecord =
            serde_json::from_str(line).map_err(|e| LogError::Malformed(format!("line {lineno}: {e}")))?;
        if let Some(prev) = records.last() {
            if r.t <= prev.t {
                return Err(LogError::Malformed(format!("line {lineno}: time {} does not increase", r.t)));
            }
        }
        records.push(StepRecord {
            t: r.t,
            leaders: r.leaders,
            followers: r.followers,
            followers_virtual: r.followers_virtual,
            e_gamma: r.e_gamma,
            e_c: r.e_c,
            max_elong: r.max_elong,
            min_obs_dist: r.min_obs_dist,
            seam: r.seam,
            projections: r.projections,
        });
    }
    if records.is_empty() {
        return Err(LogError::Malformed("no records".into()));
    }
    Ok(RunLog { records, fault })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(t: f64, x: f64) -> StepRecord {
        StepRecord {
            t,
            leaders: vec![Vec2::new(x, -x), Vec2::new(0.1, 0.2)],
            followers: vec![Vec2::new(1.0 / 3.0, 2.0 / 3.0)],
            followers_virtual: vec![Vec2::new(std::f64::consts::PI, 1e-300)],
            e_gamma: 0.1 + 0.2,
            e_c: x * 1e10,
            max_elong: 0.171_572_875_253_809_9,
            min_obs_dist: if t > 0.0 { Some(5e-324) } else { None },
            seam: 0.0,
            projections: 3,
        }
    }

    #[test]
    fn records_round_trip() {
        let recs = vec![record(0.0, 1.0), record(0.1, -2.5e-8)];
        let mut buf = Vec::new();
        write_log(&mut buf, &recs, None).unwrap();
        let log = parse_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(log.records, recs);
        assert!(log.fault.is_none());
    }

    #[test]
    fn fault_round_trip() {
        let f = Fault {
            t: 0.3,
            step: 30,
            kind: "SafetyBreached".into(),
            message: "leader 3 \"too\" close".into(),
            leaders: vec![Vec2::new(1.0, 2.0)],
            leader_velocities: vec![Vec2::ZERO],
            followers: vec![],
        };
        let mut buf = Vec::new();
        write_log(&mut buf, &[record(0.0, 1.0)], Some(&f)).unwrap();
        let log = parse_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(log.fault, Some(f));
    }

    #[test]
    fn malformed_logs() {
        assert!(matches!(parse_log(""), Err(LogError::Malformed(_))));
        assert!(matches!(parse_log("{\"t\": 1}"), Err(LogError::Malformed(_))));
        let a = format_record(&record(1.0, 1.0));
        let b = format_record(&record(0.5, 1.0));
        assert!(matches!(parse_log(&format!("{a}\n{b}\n")), Err(LogError::Malformed(_))));
    }

    #[test]
    fn csv_rows() {
        let recs = vec![record(0.0, 1.0), record(0.1, 2.0)];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "t,e_gamma,e_c,max_elong,min_obs_dist");
        assert!(lines[1].ends_with(",inf"));
        let t: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
        assert_eq!(t, 0.1);
    }

    proptest! {
        #[test]
        fn any_finite_float_survives(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let mut s = String::new();
            push_f64(&mut s, v);
            let back: f64 = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
