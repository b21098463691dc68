//! Declarative scenarios: TOML configuration, parallel runs, CSV and JSON
//! outputs, phase portraits and descent checks.

mod build;
mod config;
mod descent;
mod output;
mod portrait;
mod run;

pub use build::{build_system, initial_states, rotation_angle, StateFn, System};
pub use config::{
    key_line, ConfigError, ControllerConfig, DescentConfig, InitialConditions, ManifoldId, OutputConfig,
    PortraitConfig, S2Config, ScenarioConfig, So3Config, TOL_INITIAL,
};
pub use descent::{check_descent, DescentCheck, DescentSummary};
pub use output::{embed_csv, format_float, write_descent, write_outputs, write_portrait};
pub use portrait::{phase_portrait, EquilibriumInfo, Overlay, Polyline, PortraitReport, Stability};
pub use run::{run_scenario, summarize, RunOptions, RunReport, RunStatus, RunSummary, ScenarioError, ScenarioReport};

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("line_filippov", include_str!("../../scenarios/line_filippov.toml")),
    ("so3_first_order", include_str!("../../scenarios/so3_first_order.toml")),
    ("sphere_first_order", include_str!("../../scenarios/sphere_first_order.toml")),
    ("sphere_terminal", include_str!("../../scenarios/sphere_terminal.toml")),
    ("mobius_smc", include_str!("../../scenarios/mobius_smc.toml")),
    ("cylinder_twisting", include_str!("../../scenarios/cylinder_twisting.toml")),
];

pub fn load_bundled(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConfigError::new(format!("no bundled scenario named `{name}`")))?;
    ScenarioConfig::parse(text, &format!("{name}.toml"))
}
