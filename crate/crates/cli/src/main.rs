use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geosmc::scenario::{
    check_descent, embed_csv, phase_portrait, run_scenario, write_descent, write_outputs, write_portrait, ManifoldId,
    RunOptions, RunStatus, ScenarioConfig, ScenarioError, ScenarioReport,
};

/// Sliding-mode control simulations on manifolds.
#[derive(Parser)]
#[command(name = "geosmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every initial condition of a scenario and write CSVs plus summary.json.
    Sim(RunArgs),
    /// Run a quotient scenario and write portrait.csv and overlay.json.
    Portrait(RunArgs),
    /// Check that the sliding variable, closed-loop field and embedding descend to the quotient.
    CheckDescent(RunArgs),
    /// Canonicalize `theta,omega` rows of a CSV and append their R^3 embedding.
    Embed {
        /// `cylinder` or `mobius`.
        manifold: String,
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    config: PathBuf,
    /// Output directory; results go to `<out>/<name>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the integrator step.
    #[arg(long)]
    step: Option<f64>,
    /// Replaces the discontinuous control by a boundary layer of this width.
    #[arg(long, value_name = "EPSILON")]
    regularize: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            step: self.step,
            regularize: self.regularize,
        }
    }

    fn load(&self) -> Result<ScenarioConfig, ScenarioError> {
        let text = std::fs::read_to_string(&self.config).map_err(|source| ScenarioError::Io {
            path: self.config.display().to_string(),
            source,
        })?;
        Ok(ScenarioConfig::parse(&text, &self.config.display().to_string())?)
    }
}

fn print_files(files: &[PathBuf], quiet: bool) {
    if !quiet {
        for f in files {
            println!("wrote {}", f.display());
        }
    }
}

fn print_runs(report: &ScenarioReport, quiet: bool) {
    for run in &report.runs {
        let s = &run.summary;
        let status = match &s.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Escaped { t } => format!("escaped at t = {t}"),
            RunStatus::Halted { reason } => format!("halted: {reason}"),
            RunStatus::Budget { max_steps, t } => format!("step budget {max_steps} exhausted at t = {t}"),
        };
        let incomplete = !matches!(s.status, RunStatus::Completed | RunStatus::Escaped { .. });
        if incomplete {
            eprintln!("run {:03}: {status}", s.index);
        } else if !quiet {
            let reach = s.reaching_time.map_or("never".to_string(), |t| format!("{t:.6}"));
            println!("run {:03}: {status}, reaching {reach}, terminal error {:.3e}", s.index, s.terminal_error);
        }
    }
}

fn sim(args: &RunArgs) -> Result<i32, ScenarioError> {
    let report = run_scenario(&args.load()?, &args.options())?;
    let files = write_outputs(&report, &args.out)?;
    print_runs(&report, args.quiet);
    print_files(&files, args.quiet);
    Ok(report.exit_code())
}

fn portrait(args: &RunArgs) -> Result<i32, ScenarioError> {
    let p = phase_portrait(&args.load()?, &args.options())?;
    let files = write_portrait(&p, &args.out)?;
    print_runs(&p.scenario, args.quiet);
    if !args.quiet {
        for e in &p.overlay.equilibria {
            println!("equilibrium {}: {:?} ({})", e.name, e.stability, e.method);
        }
    }
    print_files(&files, args.quiet);
    Ok(p.scenario.exit_code())
}

fn descent(args: &RunArgs) -> Result<i32, ScenarioError> {
    let d = check_descent(&args.load()?, &args.options())?;
    let file = write_descent(&d, &args.out)?;
    for c in &d.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        if !c.passed || !args.quiet {
            println!("{}: {verdict} (max violation {:e})", c.target, c.max_violation);
        }
    }
    print_files(&[file], args.quiet);
    Ok(if d.passed() { 0 } else { 1 })
}

fn embed(manifold: &str, input: &Path, output: &Path, quiet: bool) -> Result<i32, ScenarioError> {
    let m: ManifoldId = manifold
        .parse()
        .map_err(|e: String| ScenarioError::Unsupported(e))?;
    let rows = embed_csv(m, input, output)?;
    if !quiet {
        println!("wrote {} rows to {}", rows, output.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sim(a) => sim(a),
        Command::Portrait(a) => portrait(a),
        Command::CheckDescent(a) => descent(a),
        Command::Embed {
            manifold,
            input,
            output,
            quiet,
        } => embed(manifold, input, output, *quiet),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
