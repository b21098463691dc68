use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::build::{build_system, initial_states, System};
use super::config::{ConfigError, ScenarioConfig};
use crate::controllers::Regularization;
use crate::integrator::{integrate, integrate_regularized, EventKind, IntegratorError, Trajectory};

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub regularize: Option<f64>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
        let mut out = cfg.clone();
        if let Some(seed) = self.seed {
            out.seed = seed;
        }
        if let Some(step) = self.step {
            out.integrator.step = step;
        }
        if let Some(epsilon) = self.regularize {
            out.regularization = Regularization::BoundaryLayer { epsilon };
        }
        if out != *cfg {
            out.check()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("integration failed: {0}")]
    Integrator(#[from] IntegratorError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ScenarioError {
    /// 2 for configuration problems, 3 for runtime failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Unsupported(_) => 2,
            Self::Integrator(_) => 3,
            Self::Io { .. } | Self::Csv(_) | Self::Json(_) => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The state left the ball of radius `escape_norm`; a property of the
    /// closed loop, not a solver failure.
    Escaped { t: f64 },
    Halted { reason: String },
    Budget { max_steps: usize, t: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub index: usize,
    pub initial_state: Vec<f64>,
    #[serde(flatten)]
    pub status: RunStatus,
    pub final_time: f64,
    /// Time of the first sliding entry.
    pub reaching_time: Option<f64>,
    /// Geodesic (so3, s2) or orbit (cylinder, mobius, line) distance to the target at the final time.
    pub terminal_error: f64,
    pub max_drift: f64,
    /// Largest monitored `|s|` from the reaching time on.
    pub max_abs_s_after_reaching: Option<f64>,
    /// Largest monitored `|s|` over the last tenth of the horizon.
    pub tail_abs_s: f64,
    pub event_counts: BTreeMap<String, usize>,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
}

#[derive(Clone)]
pub struct ScenarioReport {
    /// Resolved configuration, overrides included.
    pub config: ScenarioConfig,
    pub system: System,
    pub runs: Vec<RunReport>,
}

#[derive(Serialize)]
pub struct SummaryDocument<'a> {
    pub generator: String,
    pub name: &'a str,
    pub manifold: &'a str,
    pub family: &'a str,
    pub seed: u64,
    pub complete: bool,
    pub config: &'a ScenarioConfig,
    pub runs: Vec<&'a RunSummary>,
}

impl ScenarioReport {
    pub fn complete(&self) -> bool {
        self.runs
            .iter()
            .all(|r| matches!(r.summary.status, RunStatus::Completed | RunStatus::Escaped { .. }))
    }

    /// 0 when every run completed or escaped, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.complete() {
            0
        } else {
            3
        }
    }

    pub fn summary_document(&self) -> SummaryDocument<'_> {
        SummaryDocument {
            generator: format!("geosmc {}", env!("CARGO_PKG_VERSION")),
            name: &self.config.name,
            manifold: self.config.manifold.as_str(),
            family: self.config.controller.family(),
            seed: self.config.seed,
            complete: self.complete(),
            config: &self.config,
            runs: self.runs.iter().map(|r| &r.summary).collect(),
        }
    }

    pub fn summary_json(&self) -> Result<String, serde_json::Error> {
        let mut s = serde_json::to_string_pretty(&self.summary_document())?;
        s.push('\n');
        Ok(s)
    }
}

fn event_name(kind: EventKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn summarize(sys: &System, index: usize, x0: &DVector<f64>, traj: &Trajectory, status: RunStatus) -> RunSummary {
    let last = traj.last();
    let reaching_time = traj.first_event(EventKind::SlidingEntry).map(|e| e.t);
    let t0 = traj.samples[0].t;
    let tail_from = last.t - 0.1 * (last.t - t0);
    let s_norm = |x: &DVector<f64>| (sys.monitor)(x).norm();
    let mut event_counts = BTreeMap::new();
    for e in &traj.events {
        *event_counts.entry(event_name(e.kind)).or_insert(0) += 1;
    }
    RunSummary {
        index,
        initial_state: x0.iter().copied().collect(),
        status,
        final_time: last.t,
        reaching_time,
        terminal_error: (sys.error)(&last.x),
        max_drift: traj.max_drift(),
        max_abs_s_after_reaching: reaching_time.map(|tr| {
            traj.samples
                .iter()
                .filter(|s| s.t >= tr)
                .map(|s| s_norm(&s.x))
                .fold(0.0, f64::max)
        }),
        tail_abs_s: traj
            .samples
            .iter()
            .filter(|s| s.t >= tail_from)
            .map(|s| s_norm(&s.x))
            .fold(0.0, f64::max),
        event_counts,
        samples: traj.samples.len(),
    }
}

fn run_one(cfg: &ScenarioConfig, sys: &System, index: usize, x0: &DVector<f64>) -> Result<RunReport, IntegratorError> {
    let span = (cfg.t_start, cfg.t_end);
    let result = if cfg.regularization.is_none() {
        integrate(&sys.field, x0, span, &cfg.integrator)
    } else {
        integrate_regularized(&sys.field, x0, span, &cfg.integrator)
    };
    let (trajectory, status) = match result {
        Ok(t) => {
            let escaped = t.events.last().is_some_and(|e| e.kind == EventKind::Escape);
            let status = match &t.halted {
                Some(_) if escaped => RunStatus::Escaped { t: t.last().t },
                Some(reason) => RunStatus::Halted { reason: reason.clone() },
                None => RunStatus::Completed,
            };
            (t, status)
        }
        Err(IntegratorError::Budget { max_steps, t, partial }) => (*partial, RunStatus::Budget { max_steps, t }),
        Err(e) => return Err(e),
    };
    Ok(RunReport {
        summary: summarize(sys, index, x0, &trajectory, status),
        trajectory,
    })
}

/// Runs every initial condition of the scenario; runs execute in parallel and
/// are reported in configuration order.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    let config = opts.apply(cfg)?;
    let system = build_system(&config)?;
    let states = initial_states(&config, &system)?;
    let runs = states
        .par_iter()
        .enumerate()
        .map(|(i, x0)| run_one(&config, &system, i, x0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScenarioReport { config, system, runs })
}
