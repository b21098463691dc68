use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::{DisturbanceSpec, Regularization, K_MAX};
use crate::integrator::IntegratorOptions;

/// Largest correction allowed when retracting a configured initial state.
pub const TOL_INITIAL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldId {
    Line,
    So3,
    S2,
    Cylinder,
    Mobius,
}

impl ManifoldId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Line => "line",
            Self::So3 => "so3",
            Self::S2 => "s2",
            Self::Cylinder => "cylinder",
            Self::Mobius => "mobius",
        }
    }

    pub fn is_quotient(&self) -> bool {
        matches!(self, Self::Cylinder | Self::Mobius)
    }
}

impl std::str::FromStr for ManifoldId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "line" => Ok(Self::Line),
            "so3" => Ok(Self::So3),
            "s2" => Ok(Self::S2),
            "cylinder" => Ok(Self::Cylinder),
            "mobius" => Ok(Self::Mobius),
            other => Err(format!("unknown manifold `{other}` (expected line, so3, s2, cylinder or mobius)")),
        }
    }
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn default_eta() -> f64 {
    0.1
}

fn default_k_max() -> f64 {
    K_MAX
}

fn north_pole() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct So3Config {
    #[serde(default = "identity3")]
    pub inertia: [[f64; 3]; 3],
    #[serde(default)]
    pub d_bar: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Desired attitude `R_d`, rows.
    #[serde(default = "identity3")]
    pub target_attitude: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S2Config {
    #[serde(default = "identity3")]
    pub inertia: [[f64; 3]; 3],
    #[serde(default)]
    pub d_bar: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Desired reduced attitude `L_d`.
    #[serde(default = "north_pole")]
    pub target: [f64; 3],
    #[serde(default = "default_k_max")]
    pub k_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    /// `x' = -sign(x) + 1/2`.
    Line,
    So3FirstOrder(So3Config),
    S2FirstOrder(S2Config),
    S2Terminal(S2Config),
    Mobius {
        theta_star: f64,
        #[serde(default)]
        d_bar: f64,
    },
    Twisting {
        k1: f64,
        k2: f64,
        #[serde(default)]
        d_bar: f64,
    },
}

impl ControllerConfig {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Line => "line",
            Self::So3FirstOrder(_) => "so3_first_order",
            Self::S2FirstOrder(_) => "s2_first_order",
            Self::S2Terminal(_) => "s2_terminal",
            Self::Mobius { .. } => "mobius",
            Self::Twisting { .. } => "twisting",
        }
    }

    pub fn manifold(&self) -> ManifoldId {
        match self {
            Self::Line => ManifoldId::Line,
            Self::So3FirstOrder(_) => ManifoldId::So3,
            Self::S2FirstOrder(_) | Self::S2Terminal(_) => ManifoldId::S2,
            Self::Mobius { .. } => ManifoldId::Mobius,
            Self::Twisting { .. } => ManifoldId::Cylinder,
        }
    }

    pub fn d_bar(&self) -> f64 {
        match self {
            Self::Line => 0.0,
            Self::So3FirstOrder(c) => c.d_bar,
            Self::S2FirstOrder(c) | Self::S2Terminal(c) => c.d_bar,
            Self::Mobius { d_bar, .. } | Self::Twisting { d_bar, .. } => *d_bar,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConditions {
    Explicit {
        states: Vec<Vec<f64>>,
    },
    /// Tensor grid with `counts[i]` evenly spaced values in `[low[i], high[i]]`,
    /// first coordinate outermost, followed by `extra` states.
    Grid {
        low: Vec<f64>,
        high: Vec<f64>,
        counts: Vec<usize>,
        #[serde(default)]
        extra: Vec<Vec<f64>>,
    },
    /// `count` states drawn with the scenario seed. On s2 and so3 the attitude
    /// part is drawn uniformly and `low`/`high` bound the angular velocity.
    Random {
        low: Vec<f64>,
        high: Vec<f64>,
        count: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trajectories: bool,
    pub summary: bool,
    pub embedding: bool,
    /// Keep every n-th trajectory row (the last row is always kept).
    pub every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectories: true,
            summary: true,
            embedding: true,
            every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortraitConfig {
    /// Range of the second coordinate for sampled switching polylines.
    pub omega_range: [f64; 2],
    pub polyline_points: usize,
    pub probe_radius: f64,
    pub probe_time: f64,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        Self {
            omega_range: [-3.0, 3.0],
            polyline_points: 201,
            probe_radius: 1e-3,
            probe_time: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentConfig {
    pub samples: usize,
    pub z_range: i32,
    pub tolerance: f64,
    pub low: [f64; 2],
    pub high: [f64; 2],
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            z_range: 3,
            tolerance: 1e-9,
            low: [-3.0 * PI, -5.0],
            high: [3.0 * PI, 5.0],
        }
    }
}

/// A scenario file. After loading, every defaulted field is filled in, so
/// serializing the value echoes the complete resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub manifold: ManifoldId,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub regularization: Regularization,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    pub initial: InitialConditions,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub portrait: PortraitConfig,
    #[serde(default)]
    pub descent: DescentConfig,
}

/// Configuration problem, anchored to a line of the source when possible.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub source: Option<String>,
    pub line: Option<usize>,
    /// Key the message concerns, used to find the line.
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            source: None,
            line: None,
            key: None,
            message: message.into(),
        }
    }

    pub fn keyed(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            ..Self::new(message)
        }
    }

    /// Resolves the line from the key when no line is known yet.
    pub fn anchored(mut self, text: &str) -> Self {
        if self.line.is_none() {
            self.line = self.key.as_deref().and_then(|k| key_line(text, k));
        }
        self
    }

    pub fn at(mut self, line: Option<usize>) -> Self {
        self.line = self.line.or(line);
        self
    }

    pub fn in_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.source, self.line) {
            (Some(s), Some(l)) => write!(f, "{s}:{l}: ")?,
            (Some(s), None) => write!(f, "{s}: ")?,
            (None, Some(l)) => write!(f, "line {l}: ")?,
            (None, None) => {}
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first `key = ...` assignment or `[key]` header.
pub fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        let header = l.trim_start_matches('[').trim_end().trim_end_matches(']');
        if l.starts_with('[') {
            return header == key || header.ends_with(&format!(".{key}"));
        }
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ScenarioConfig {
    /// Parses and validates TOML text. `source` names the file in messages.
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            ConfigError::new(e.message().trim().to_string()).at(line).in_source(source)
        })?;
        cfg.check().map_err(|e| e.anchored(text).in_source(source))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read scenario: {e}")).in_source(path.display().to_string()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Full validation: field checks, closed-loop construction and initial states.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.validate()?;
        let sys = super::build::build_system(self)?;
        super::build::initial_states(self, &sys)?;
        Ok(())
    }

    /// Checks that do not require building the closed loop.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(ConfigError::keyed("name", "name must be non-empty and must not contain path separators"));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(ConfigError::keyed("t_end", format!("need finite t_end > t_start, got [{}, {}]", self.t_start, self.t_end)));
        }
        if self.controller.manifold() != self.manifold {
            return Err(ConfigError::keyed(
                "family",
                format!(
                    "controller family `{}` runs on `{}`, but the scenario manifold is `{}`",
                    self.controller.family(),
                    self.controller.manifold().as_str(),
                    self.manifold.as_str()
                ),
            ));
        }
        self.integrator
            .validate()
            .map_err(|e| ConfigError::keyed("integrator", e.to_string()))?;
        if self.output.every == 0 {
            return Err(ConfigError::keyed("every", "output.every must be at least 1"));
        }
        let p = &self.portrait;
        if !(p.omega_range[0] < p.omega_range[1] && p.polyline_points >= 2 && p.probe_radius > 0.0 && p.probe_time > 0.0) {
            return Err(ConfigError::keyed("portrait", "portrait needs omega_range[0] < omega_range[1], polyline_points >= 2 and positive probe settings"));
        }
        let d = &self.descent;
        if d.samples == 0 || d.z_range < 0 || !(d.tolerance > 0.0) || !(d.low[0] < d.high[0] && d.low[1] < d.high[1]) {
            return Err(ConfigError::keyed("descent", "descent needs samples > 0, z_range >= 0, tolerance > 0 and low < high"));
        }
        match &self.initial {
            InitialConditions::Explicit { states } if states.is_empty() => {
                Err(ConfigError::keyed("states", "at least one initial state is required"))
            }
            InitialConditions::Grid { low, high, counts, .. } => {
                if low.len() != high.len() || low.len() != counts.len() {
                    return Err(ConfigError::keyed("counts", "grid low, high and counts must have equal lengths"));
                }
                if counts.contains(&0) {
                    return Err(ConfigError::keyed("counts", "grid counts must be positive"));
                }
                if low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                    return Err(ConfigError::keyed("low", "grid needs low <= high in every coordinate"));
                }
                Ok(())
            }
            InitialConditions::Random { low, high, count } => {
                if *count == 0 {
                    return Err(ConfigError::keyed("count", "random initial conditions need count > 0"));
                }
                if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                    return Err(ConfigError::keyed("low", "random box needs equal lengths and low <= high"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "demo"
manifold = "cylinder"
t_end = 2.0

[controller]
family = "twisting"
k1 = 5.0
k2 = 2.0

[initial]
kind = "explicit"
states = [[1.0, 0.0]]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ScenarioConfig::parse(MINIMAL, "demo.toml").unwrap();
        assert_eq!(cfg.integrator, IntegratorOptions::default());
        assert_eq!(cfg.regularization, Regularization::None);
        assert_eq!(cfg.t_start, 0.0);
        assert_eq!(cfg.descent.z_range, 3);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ScenarioConfig::parse(MINIMAL, "demo.toml").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::parse(&text, "echo").unwrap(), cfg);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let bad = MINIMAL.replace("k2 = 2.0", "k2 = ");
        let e = ScenarioConfig::parse(&bad, "demo.toml").unwrap_err();
        assert_eq!(e.line, Some(9));
        assert!(e.to_string().starts_with("demo.toml:9:"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("t_end = 2.0", "t_end = 2.0\nstep = 3");
        let e = ScenarioConfig::parse(&bad, "x").unwrap_err();
        assert!(e.message.contains("step"), "{e}");
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn family_must_match_manifold() {
        let bad = MINIMAL.replace("manifold = \"cylinder\"", "manifold = \"mobius\"");
        let e = ScenarioConfig::parse(&bad, "x").unwrap_err();
        assert_eq!(e.line, Some(7));
        assert!(e.message.contains("twisting"));
    }

    #[test]
    fn unknown_controller_keys_are_rejected() {
        let bad = MINIMAL.replace("k2 = 2.0", "k2 = 2.0\nk3 = 1.0");
        assert!(ScenarioConfig::parse(&bad, "x").is_err());
    }

    #[test]
    fn time_span_is_checked() {
        let bad = MINIMAL.replace("t_end = 2.0", "t_end = -1.0");
        let e = ScenarioConfig::parse(&bad, "x").unwrap_err();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn key_lines() {
        let text = "a = 1\n[controller]\nk1 = 2\n  k2= 3\nk10 = 1\n";
        assert_eq!(key_line(text, "k1"), Some(3));
        assert_eq!(key_line(text, "k2"), Some(4));
        assert_eq!(key_line(text, "controller"), Some(2));
        assert_eq!(key_line(text, "k3"), None);
    }

    #[test]
    fn manifold_ids_parse() {
        assert_eq!("so3".parse::<ManifoldId>().unwrap(), ManifoldId::So3);
        assert!("torus".parse::<ManifoldId>().is_err());
    }
}
