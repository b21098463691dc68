use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::build::System;
use super::config::{ConfigError, ManifoldId};
use super::descent::DescentSummary;
use super::portrait::PortraitReport;
use super::run::{RunReport, ScenarioError, ScenarioReport};
use crate::controllers::{cylinder_embed, mobius_embed};
use crate::geometry::QuotientManifold;
use crate::integrator::Sample;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn create_dir(dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), ScenarioError> {
    fs::write(path, text).map_err(|e| ScenarioError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ScenarioError> {
    let file = fs::File::create(path).map_err(|e| ScenarioError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn kept(samples: &[Sample], every: usize) -> impl Iterator<Item = &Sample> {
    let last = samples.len().saturating_sub(1);
    samples
        .iter()
        .enumerate()
        .filter(move |(i, _)| i % every == 0 || *i == last)
        .map(|(_, s)| s)
}

fn trajectory_header(sys: &System) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(sys.state_names.iter().cloned());
    h.push("mode".into());
    h.extend(sys.monitor_names.iter().cloned());
    h.extend(sys.control_names.iter().cloned());
    h.push("drift".into());
    h
}

fn trajectory_row(sys: &System, s: &Sample) -> Vec<String> {
    let mut row = vec![format_float(s.t)];
    row.extend(s.x.iter().map(|&v| format_float(v)));
    row.push(s.mode.label());
    row.extend((sys.monitor)(&s.x).iter().map(|&v| format_float(v)));
    match &s.u {
        Some(u) if u.len() == sys.control_names.len() => row.extend(u.iter().map(|&v| format_float(v))),
        _ => row.extend(std::iter::repeat_n(String::new(), sys.control_names.len())),
    }
    row.push(format_float(s.drift));
    row
}

fn embedding_row(t: f64, q: &QuotientManifold, manifold: ManifoldId, x: &DVector<f64>) -> Vec<String> {
    let c = q.canonicalize(x);
    let k = match manifold {
        ManifoldId::Mobius => mobius_embed(c[0], c[1]),
        _ => cylinder_embed(c[0], c[1]),
    };
    [t, c[0], c[1], k.x, k.y, k.z].iter().map(|&v| format_float(v)).collect()
}

const EMBED_HEADER: [&str; 6] = ["t", "theta", "omega", "k1", "k2", "k3"];

fn write_run(dir: &Path, report: &ScenarioReport, run: &RunReport, files: &mut Vec<PathBuf>) -> Result<(), ScenarioError> {
    let sys = &report.system;
    let every = report.config.output.every;
    let i = run.summary.index;
    if report.config.output.trajectories {
        let path = dir.join(format!("run_{i:03}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(trajectory_header(sys))?;
        for s in kept(&run.trajectory.samples, every) {
            w.write_record(trajectory_row(sys, s))?;
        }
        w.flush().map_err(|e| ScenarioError::io(&path, e))?;
        files.push(path);
    }
    if let (true, Some(q)) = (report.config.output.embedding, &sys.quotient) {
        let path = dir.join(format!("run_{i:03}_embed.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(EMBED_HEADER)?;
        for s in kept(&run.trajectory.samples, every) {
            w.write_record(embedding_row(s.t, q, sys.manifold, &s.x))?;
        }
        w.flush().map_err(|e| ScenarioError::io(&path, e))?;
        files.push(path);
    }
    Ok(())
}

/// Writes per-run CSVs and `summary.json` under `out/<name>/`.
pub fn write_outputs(report: &ScenarioReport, out: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let dir = out.join(&report.config.name);
    create_dir(&dir)?;
    let mut files = Vec::new();
    for run in &report.runs {
        write_run(&dir, report, run, &mut files)?;
    }
    if report.config.output.summary {
        let path = dir.join("summary.json");
        write_text(&path, &report.summary_json()?)?;
        files.push(path);
    }
    Ok(files)
}

/// Writes `portrait.csv` (all runs, canonical coordinates and embedding) and
/// `overlay.json`, plus the usual summary.
pub fn write_portrait(p: &PortraitReport, out: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let report = &p.scenario;
    let dir = out.join(&report.config.name);
    create_dir(&dir)?;
    let q = report
        .system
        .quotient
        .as_ref()
        .ok_or_else(|| ScenarioError::Unsupported("portraits need a quotient manifold".into()))?;
    let path = dir.join("portrait.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["run"];
    header.extend(EMBED_HEADER);
    header.push("mode");
    w.write_record(&header)?;
    for run in &report.runs {
        for s in kept(&run.trajectory.samples, report.config.output.every) {
            let mut row = vec![run.summary.index.to_string()];
            row.extend(embedding_row(s.t, q, report.system.manifold, &s.x));
            row.push(s.mode.label());
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| ScenarioError::io(&path, e))?;
    let overlay = dir.join("overlay.json");
    let mut text = serde_json::to_string_pretty(&p.overlay)?;
    text.push('\n');
    write_text(&overlay, &text)?;
    let summary = dir.join("summary.json");
    write_text(&summary, &report.summary_json()?)?;
    Ok(vec![path, overlay, summary])
}

pub fn write_descent(d: &DescentSummary, out: &Path) -> Result<PathBuf, ScenarioError> {
    let dir = out.join(&d.name);
    create_dir(&dir)?;
    let path = dir.join("descent.json");
    let mut text = serde_json::to_string_pretty(d)?;
    text.push('\n');
    write_text(&path, &text)?;
    Ok(path)
}

/// Reads a CSV with `theta` and `omega` columns (and optionally `t`) and
/// writes canonical coordinates with their `R^3` embedding. Returns the row count.
pub fn embed_csv(manifold: ManifoldId, input: &Path, output: &Path) -> Result<usize, ScenarioError> {
    let q = match manifold {
        ManifoldId::Mobius => QuotientManifold::mobius(),
        ManifoldId::Cylinder => QuotientManifold::cylinder(),
        other => {
            return Err(ScenarioError::Unsupported(format!(
                "embedding is defined for cylinder and mobius, not {}",
                other.as_str()
            )))
        }
    };
    let file = fs::File::open(input).map_err(|e| ScenarioError::io(input, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ti), Some(wi)) = (col("theta"), col("omega")) else {
        return Err(ConfigError::new(format!("{}: needs `theta` and `omega` columns", input.display())).into());
    };
    let t_col = col("t");
    let mut w = csv_writer(output)?;
    w.write_record(EMBED_HEADER)?;
    let mut rows = 0;
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64, ScenarioError> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| ConfigError::new(format!("{}: row {}: column {i} is not a number", input.display(), n + 2)).into())
        };
        let t = match t_col {
            Some(c) => field(c)?,
            None => n as f64,
        };
        let x = DVector::from_column_slice(&[field(ti)?, field(wi)?]);
        w.write_record(embedding_row(t, &q, manifold, &x))?;
        rows += 1;
    }
    w.flush().map_err(|e| ScenarioError::io(output, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{load_bundled, run_scenario, RunOptions};

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn outputs_are_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_bundled("cylinder_twisting").unwrap();
        let a = write_outputs(&run_scenario(&cfg, &RunOptions::default()).unwrap(), &dir.path().join("a")).unwrap();
        let b = write_outputs(&run_scenario(&cfg, &RunOptions::default()).unwrap(), &dir.path().join("b")).unwrap();
        assert_eq!(a.len(), 12 * 2 + 1);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }

    #[test]
    fn trajectory_csv_has_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&load_bundled("sphere_terminal").unwrap(), &RunOptions::default()).unwrap();
        write_outputs(&report, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("sphere_terminal/run_000.csv")).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "t,l1,l2,l3,w1,w2,w3,mode,s1,s2,s3,u1,u2,u3,drift");
        assert_eq!(text.lines().count(), 10_002);
    }

    #[test]
    fn embed_round_trip_is_orbit_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        fs::write(&input, "t,theta,omega\n0,0.5,1.0\n1,6.783185307179586,-1.0\n").unwrap();
        let output = dir.path().join("out.csv");
        assert_eq!(embed_csv(ManifoldId::Mobius, &input, &output).unwrap(), 2);
        let mut r = csv::Reader::from_path(&output).unwrap();
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        for (a, b) in rows[0][3..].iter().zip(&rows[1][3..]) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(embed_csv(ManifoldId::S2, &input, &output).is_err());
    }
}
