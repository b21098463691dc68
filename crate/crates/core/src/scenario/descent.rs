use nalgebra::DVector;
use serde::Serialize;

use super::build::build_system;
use super::config::ScenarioConfig;
use super::run::{RunOptions, ScenarioError};
use crate::geometry::{check_field_descends, check_function_descends, DescentReport};
use crate::sampling::{SampleBox, SplitMix64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentCheck {
    /// `sliding_variable`, `closed_loop_field` or `embedding`.
    pub target: String,
    pub passed: bool,
    pub max_violation: f64,
    pub witness: Option<(Vec<f64>, i32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentSummary {
    pub name: String,
    pub manifold: String,
    pub samples: usize,
    pub z_range: i32,
    pub tolerance: f64,
    pub seed: u64,
    /// Times at which the (possibly time-dependent) field was checked.
    pub field_times: Vec<f64>,
    pub checks: Vec<DescentCheck>,
}

impl DescentSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(target: &str, r: DescentReport) -> DescentCheck {
    DescentCheck {
        target: target.into(),
        passed: r.passed,
        max_violation: r.max_violation,
        witness: r.witness,
    }
}

/// Checks that the sliding variable, the closed-loop field and the `R^3`
/// embedding of a quotient scenario descend to the quotient.
pub fn check_descent(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<DescentSummary, ScenarioError> {
    let cfg = opts.apply(cfg)?;
    if !cfg.manifold.is_quotient() {
        return Err(ScenarioError::Unsupported(format!(
            "descent checks need a quotient manifold (cylinder or mobius), not {}",
            cfg.manifold.as_str()
        )));
    }
    let sys = build_system(&cfg)?;
    let q = sys.quotient.clone().expect("quotient scenario");
    let action = q.action().clone();
    let d = &cfg.descent;
    let samples = SampleBox::new(d.low.to_vec(), d.high.to_vec()).sample(d.samples, &mut SplitMix64::new(cfg.seed));
    let times = vec![cfg.t_start, 0.5 * (cfg.t_start + cfg.t_end), cfg.t_end];

    let sliding = check_function_descends(&action, |x| (sys.monitor)(x), &samples, d.z_range, d.tolerance);
    let field = times
        .iter()
        .map(|&t| check_field_descends(&action, |x| sys.field.eval(x, t), &samples, d.z_range, d.tolerance))
        .max_by(|a, b| a.max_violation.total_cmp(&b.max_violation))
        .expect("three field times");
    let embed = |x: &DVector<f64>| {
        let k = sys.embed(x).expect("quotient embedding");
        DVector::from_column_slice(k.as_slice())
    };
    let embedding = check_function_descends(&action, embed, &samples, d.z_range, d.tolerance);
    Ok(DescentSummary {
        name: cfg.name.clone(),
        manifold: cfg.manifold.as_str().into(),
        samples: samples.len(),
        z_range: d.z_range,
        tolerance: d.tolerance,
        seed: cfg.seed,
        field_times: times,
        checks: vec![
            check("sliding_variable", sliding),
            check("closed_loop_field", field),
            check("embedding", embedding),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_bundled;

    #[test]
    fn bundled_quotients_pass() {
        for name in ["mobius_smc", "cylinder_twisting"] {
            let s = check_descent(&load_bundled(name).unwrap(), &RunOptions::default()).unwrap();
            assert!(s.passed(), "{name}: {s:?}");
            assert!(s.checks.iter().all(|c| c.max_violation <= 1e-9));
        }
    }

    #[test]
    fn disturbed_mobius_field_fails_for_odd_z() {
        let mut cfg = load_bundled("mobius_smc").unwrap();
        cfg.controller = crate::scenario::ControllerConfig::Mobius {
            theta_star: 1.0,
            d_bar: 0.5,
        };
        cfg.disturbance = crate::controllers::DisturbanceSpec {
            channels: vec![vec![crate::controllers::DisturbanceTerm::Constant { value: 0.3 }]],
        };
        let s = check_descent(&cfg, &RunOptions::default()).unwrap();
        let field = &s.checks[1];
        assert!(!field.passed);
        assert!(field.witness.as_ref().unwrap().1 % 2 != 0);
        assert!(s.checks[0].passed && s.checks[2].passed);
    }

    #[test]
    fn non_quotients_are_unsupported() {
        let cfg = load_bundled("line_filippov").unwrap();
        assert!(matches!(check_descent(&cfg, &RunOptions::default()), Err(ScenarioError::Unsupported(_))));
    }
}
