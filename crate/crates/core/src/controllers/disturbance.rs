use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ControllerError;

/// One additive term of a disturbance channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceTerm {
    /// `amplitude sin(frequency t + phase)`.
    Sin {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude sin(cos(a t))`.
    SinOfCos { amplitude: f64, a: f64 },
    Constant { value: f64 },
}

impl DisturbanceTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            Self::SinOfCos { amplitude, a } => amplitude * (a * t).cos().sin(),
            Self::Constant { value } => value,
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Self::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
            Self::SinOfCos { amplitude, a } => amplitude.is_finite() && a.is_finite(),
            Self::Constant { value } => value.is_finite(),
        }
    }
}

/// Time-only disturbance, one list of terms per channel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub channels: Vec<Vec<DisturbanceTerm>>,
}

impl DisturbanceSpec {
    pub fn zero(dim: usize) -> Self {
        Self {
            channels: vec![Vec::new(); dim],
        }
    }

    /// `(0.1 sin(cos 4t), 0.2, 0.2 sin 6t)`.
    pub fn reduced_attitude_example() -> Self {
        Self {
            channels: vec![
                vec![DisturbanceTerm::SinOfCos { amplitude: 0.1, a: 4.0 }],
                vec![DisturbanceTerm::Constant { value: 0.2 }],
                vec![DisturbanceTerm::Sin {
                    amplitude: 0.2,
                    frequency: 6.0,
                    phase: 0.0,
                }],
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn is_zero(&self) -> bool {
        self.channels.iter().all(|c| c.is_empty())
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|c| c.iter().map(|term| term.eval(t)).sum::<f64>()),
        )
    }

    /// Channel value, zero for missing channels.
    pub fn channel(&self, i: usize, t: f64) -> f64 {
        self.channels
            .get(i)
            .map_or(0.0, |c| c.iter().map(|term| term.eval(t)).sum())
    }

    /// Largest Euclidean norm over `samples + 1` evenly spaced times in `[0, horizon]`.
    pub fn sup_norm(&self, horizon: f64, samples: usize) -> f64 {
        (0..=samples)
            .map(|k| self.eval(horizon * k as f64 / samples.max(1) as f64).norm())
            .fold(0.0, f64::max)
    }

    /// Checks shape, finiteness, and `sup |d| <= d_bar` over the horizon.
    pub fn check(&self, dim: usize, d_bar: f64, horizon: f64) -> Result<(), ControllerError> {
        if !self.is_zero() && self.dim() != dim {
            return Err(ControllerError::InvalidParams(format!(
                "disturbance has {} channels, the system has {dim}",
                self.dim()
            )));
        }
        if !self.channels.iter().flatten().all(DisturbanceTerm::is_finite) {
            return Err(ControllerError::InvalidParams("disturbance terms must be finite".into()));
        }
        let samples = ((horizon.abs() * 1000.0) as usize).clamp(1000, 1_000_000);
        let sup = self.sup_norm(horizon, samples);
        if sup > d_bar {
            return Err(ControllerError::DisturbanceBound { sup, bound: d_bar });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        let d = DisturbanceSpec::reduced_attitude_example();
        let v = d.eval(0.0);
        assert!((v[0] - 0.1 * 1.0_f64.sin()).abs() < 1e-15);
        assert_eq!(v[1], 0.2);
        assert_eq!(v[2], 0.0);
        let t = 0.37;
        assert!((d.eval(t)[2] - 0.2 * (6.0 * t).sin()).abs() < 1e-15);
    }

    #[test]
    fn example_respects_bound() {
        let d = DisturbanceSpec::reduced_attitude_example();
        assert!(d.check(3, 0.3, 10.0).is_ok());
        assert!(matches!(d.check(3, 0.25, 10.0), Err(ControllerError::DisturbanceBound { .. })));
        assert!(d.check(2, 0.3, 10.0).is_err());
    }

    #[test]
    fn zero_spec() {
        let d = DisturbanceSpec::zero(3);
        assert!(d.is_zero());
        assert_eq!(d.eval(1.0).norm(), 0.0);
        assert_eq!(d.channel(7, 1.0), 0.0);
        assert!(d.check(3, 0.0, 5.0).is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let d = DisturbanceSpec::reduced_attitude_example();
        let text = toml::to_string(&d).unwrap();
        let back: DisturbanceSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
}
