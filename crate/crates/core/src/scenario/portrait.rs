use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::build::System;
use super::config::{ControllerConfig, ManifoldId, PortraitConfig, ScenarioConfig};
use super::run::{run_scenario, RunOptions, ScenarioError, ScenarioReport};
use crate::integrator::{integrate, IntegratorOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polyline {
    pub name: String,
    /// Canonical `(theta, omega)` points.
    pub points: Vec<[f64; 2]>,
    pub embedded: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumInfo {
    pub name: String,
    pub state: [f64; 2],
    pub canonical: [f64; 2],
    pub embedded: [f64; 3],
    pub stability: Stability,
    /// "linearization" away from switching sets, "probes" on them.
    pub method: String,
    pub eigenvalues: Option<[[f64; 2]; 2]>,
    pub probes_approaching: usize,
    pub probes_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Overlay {
    pub name: String,
    pub manifold: String,
    pub switching_sets: Vec<Polyline>,
    pub equilibria: Vec<EquilibriumInfo>,
}

#[derive(Clone)]
pub struct PortraitReport {
    pub scenario: ScenarioReport,
    pub overlay: Overlay,
}

fn polyline(sys: &System, name: &str, pts: impl Iterator<Item = [f64; 2]>) -> Polyline {
    let q = sys.quotient.as_ref().expect("portraits run on quotients");
    let mut points = Vec::new();
    let mut embedded = Vec::new();
    for p in pts {
        let x = DVector::from_column_slice(&p);
        let c = q.canonicalize(&x);
        let k = sys.embed(&x).expect("quotient embedding");
        points.push([c[0], c[1]]);
        embedded.push([k.x, k.y, k.z]);
    }
    Polyline {
        name: name.into(),
        points,
        embedded,
    }
}

fn switching_sets(cfg: &ScenarioConfig, sys: &System) -> Vec<Polyline> {
    let p = &cfg.portrait;
    let n = p.polyline_points;
    let along = |lo: f64, hi: f64| (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64);
    let [w0, w1] = p.omega_range;
    match &cfg.controller {
        ControllerConfig::Mobius { theta_star, .. } => {
            let ts = *theta_star;
            vec![
                polyline(sys, "S1: theta = pi", along(w0, w1).map(|w| [PI, w])),
                polyline(
                    sys,
                    "S2: omega = -sin((theta - theta*)/2)",
                    along(-PI, PI).map(|t| [t, -(0.5 * (t - ts)).sin()]),
                ),
            ]
        }
        _ => vec![
            polyline(sys, "sin(theta) = 0 at theta = 0", along(w0, w1).map(|w| [0.0, w])),
            polyline(sys, "sin(theta) = 0 at theta = pi", along(w0, w1).map(|w| [PI, w])),
            polyline(sys, "omega = 0", along(-PI, PI).map(|t| [t, 0.0])),
        ],
    }
}

fn candidates(cfg: &ScenarioConfig) -> Vec<(String, [f64; 2])> {
    match &cfg.controller {
        ControllerConfig::Mobius { theta_star, .. } => {
            let c = (0.5 * theta_star).cos();
            vec![
                ("desired point (theta*, 0)".into(), [*theta_star, 0.0]),
                ("S1 saddle, root of w^2 + w cos(theta*/2) - 2".into(), [PI, 0.5 * (-c + (c * c + 8.0).sqrt())]),
                ("S1 corner with S2".into(), [PI, -c]),
            ]
        }
        _ => vec![("origin".into(), [0.0, 0.0]), ("upright (pi, 0)".into(), [PI, 0.0])],
    }
}

/// Jacobian of the region field at `x` by central differences.
fn jacobian(sys: &System, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let signs = sys.field.signs_at(x, t);
    let h = 1e-6;
    let mut j = DMatrix::zeros(2, 2);
    for k in 0..2 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (sys.field.region_field(signs, &xp, t) - sys.field.region_field(signs, &xm, t)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

fn classify(cfg: &ScenarioConfig, sys: &System, name: String, p: [f64; 2]) -> Result<EquilibriumInfo, ScenarioError> {
    let q = sys.quotient.as_ref().expect("portraits run on quotients");
    let x = DVector::from_column_slice(&p);
    let c = q.canonicalize(&x);
    let k = sys.embed(&x).expect("quotient embedding");
    let pc: &PortraitConfig = &cfg.portrait;
    let r = pc.probe_radius;
    let t0 = cfg.t_start;
    let near_switch = sys.field.switching_values(&x, t0).iter().any(|v| v.abs() <= 10.0 * r);
    let mut info = EquilibriumInfo {
        name,
        state: p,
        canonical: [c[0], c[1]],
        embedded: [k.x, k.y, k.z],
        stability: Stability::Saddle,
        method: String::new(),
        eigenvalues: None,
        probes_approaching: 0,
        probes_total: 0,
    };
    if !near_switch {
        let j = jacobian(sys, &x, t0);
        let (tr, det) = (j.trace(), j.determinant());
        let disc = tr * tr - 4.0 * det;
        let eig = if disc >= 0.0 {
            [[0.5 * (tr - disc.sqrt()), 0.0], [0.5 * (tr + disc.sqrt()), 0.0]]
        } else {
            [[0.5 * tr, -0.5 * (-disc).sqrt()], [0.5 * tr, 0.5 * (-disc).sqrt()]]
        };
        let stability = if det < 0.0 {
            Some(Stability::Saddle)
        } else if det > 0.0 && tr < 0.0 {
            Some(Stability::Stable)
        } else if det > 0.0 && tr > 0.0 {
            Some(Stability::Unstable)
        } else {
            None
        };
        if let Some(s) = stability {
            info.stability = s;
            info.method = "linearization".into();
            info.eigenvalues = Some(eig);
            return Ok(info);
        }
    }
    // Probes along the axes and diagonals; axis probes keep the unperturbed coordinate exact.
    let d = std::f64::consts::FRAC_1_SQRT_2 * r;
    let offsets = [[r, 0.0], [-r, 0.0], [0.0, r], [0.0, -r], [d, d], [d, -d], [-d, d], [-d, -d]];
    let opts = IntegratorOptions {
        max_steps: cfg.integrator.max_steps,
        ..cfg.integrator.clone()
    };
    for o in offsets {
        let x0 = DVector::from_column_slice(&[p[0] + o[0], p[1] + o[1]]);
        let start = q.orbit_distance(&x0, &x);
        let traj = match integrate(&sys.field, &x0, (t0, t0 + pc.probe_time), &opts) {
            Ok(t) => t,
            Err(crate::integrator::IntegratorError::Budget { partial, .. }) => *partial,
            Err(e) => return Err(e.into()),
        };
        if q.orbit_distance(&traj.last().x, &x) < start {
            info.probes_approaching += 1;
        }
        info.probes_total += 1;
    }
    info.method = "probes".into();
    info.stability = match info.probes_approaching {
        0 => Stability::Unstable,
        n if n == info.probes_total => Stability::Stable,
        _ => Stability::Saddle,
    };
    Ok(info)
}

/// Runs the scenario's initial-condition set and builds the overlay metadata.
pub fn phase_portrait(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<PortraitReport, ScenarioError> {
    if !cfg.manifold.is_quotient() {
        return Err(ScenarioError::Unsupported(format!(
            "phase portraits need a 2-D quotient manifold (cylinder or mobius), not {}",
            cfg.manifold.as_str()
        )));
    }
    let scenario = run_scenario(cfg, opts)?;
    let (c, sys) = (&scenario.config, &scenario.system);
    let equilibria = candidates(c)
        .into_iter()
        .map(|(name, p)| classify(c, sys, name, p))
        .collect::<Result<Vec<_>, _>>()?;
    let overlay = Overlay {
        name: c.name.clone(),
        manifold: c.manifold.as_str().into(),
        switching_sets: switching_sets(c, sys),
        equilibria,
    };
    debug_assert!(matches!(c.manifold, ManifoldId::Cylinder | ManifoldId::Mobius));
    Ok(PortraitReport { scenario, overlay })
}
