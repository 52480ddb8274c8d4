//! Command-line front end: load a game, classify it, dispatch to a solver,
//! verify, and report.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynkin::general::{rounding_tolerance, VERIFY_TOL};
use dynkin::io::{load_game, load_profiles, save_profiles, IoError};
use dynkin::simulate::{estimate_payoffs, EmpiricalEstimate, HorizonMode, SimulationConfig, SimulationError};
use dynkin::solver::SolveError;
use dynkin::zero_sum::PureDiagnosticsReport;
use dynkin::{
    classify_game, evaluate_payoffs, solve, verify_equilibrium, EquilibriumReport, GameClass, Mode,
    SolveOptions, SolverPath, ValidatedGame, ValueFunction,
};
use serde::Serialize;
use thiserror::Error;

mod text;

#[derive(Debug, Parser)]
#[command(name = "dynkin", version, about = "Nash equilibria of Dynkin stopping games on finite Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a game, solve it along the matching path and verify the result.
    Solve(SolveArgs),
    /// Check a profile pair against the equilibrium conditions.
    Verify(VerifyArgs),
    /// Estimate both players' payoffs by Monte Carlo.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    ZeroSum,
    Symmetric,
    General,
    DiagnosePure,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auto => Mode::Auto,
            ModeArg::ZeroSum => Mode::ZeroSum,
            ModeArg::Symmetric => Mode::Symmetric,
            ModeArg::General => Mode::General,
            ModeArg::DiagnosePure => Mode::DiagnosePure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Convergence target of the value iterations.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the equilibrium profiles to this file.
    #[arg(long)]
    pub write_profiles: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    /// Verification slack; raised automatically for very large payoffs.
    #[arg(long, default_value_t = VERIFY_TOL)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Starting state label; defaults to the first declared state.
    #[arg(long)]
    pub initial_state: Option<String>,
    /// Truncate discounted episodes after this many steps instead of killing
    /// the chain with probability `1 - α` per step.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid game:\n{0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

/// Process outcome apart from input errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Solver non-convergence or a failed verification.
    Unresolved,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Unresolved => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GameSummary {
    pub states: Vec<String>,
    pub alpha: f64,
    pub payoff_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub initial_state: String,
    pub seed: u64,
    pub horizon: HorizonMode,
    pub estimate: EmpiricalEstimate,
    /// Exact payoffs at the initial state.
    pub exact: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub game: GameSummary,
    pub classification: GameClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_path: Option<SolverPath>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueFunction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<PureDiagnosticsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    /// Solver wall-clock times; left out of verify and simulate reports so
    /// that their output is reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    /// Reason the run ended without a verified result.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunReport {
    fn new(game: &ValidatedGame) -> Self {
        RunReport {
            game: GameSummary {
                states: game.space().labels().to_vec(),
                alpha: game.alpha(),
                payoff_scale: game.payoff_scale(),
            },
            classification: classify_game(game),
            solver_path: None,
            equilibrium: None,
            value: None,
            diagnostics: None,
            simulation: None,
            timings: None,
            failure: None,
        }
    }

    pub fn status(&self) -> Status {
        let failed = self.failure.is_some() || self.equilibrium.as_ref().is_some_and(|r| !r.is_verified());
        if failed {
            Status::Unresolved
        } else {
            Status::Success
        }
    }
}

fn load(path: &Path) -> Result<ValidatedGame, CliError> {
    load_game(path)?
        .validate()
        .map_err(|e| CliError::Invalid(e.to_string()))
}

/// Solves the game file and returns the report; the solver's own failures
/// are recorded in it rather than returned as errors.
pub fn cmd_solve(args: &SolveArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let game = load(&args.game)?;
    let load_seconds = start.elapsed().as_secs_f64();
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        damping: args.damping,
        restarts: args.restarts,
        seed: args.seed,
    };
    let mut report = RunReport::new(&game);
    let solving = Instant::now();
    let result = solve(&game, args.mode.into(), &opts);
    report.timings = Some(Timings {
        load_seconds,
        solve_seconds: solving.elapsed().as_secs_f64(),
    });
    match result {
        Ok(sol) => {
            report.solver_path = Some(sol.path);
            report.equilibrium = sol.report;
            report.value = sol.value;
            report.diagnostics = sol.diagnostics;
        }
        Err(SolveError::ModeMismatch { .. }) => {
            let name = args.mode.to_possible_value().map(|v| v.get_name().to_string());
            return Err(CliError::Usage(format!(
                "--mode {} does not apply to this game",
                name.unwrap_or_default()
            )));
        }
        Err(e) if e.is_nonconvergence() => {
            report.equilibrium = e.best_report().cloned();
            report.failure = Some(e.to_string());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    }
    if let (Some(path), Some(eq)) = (&args.write_profiles, &report.equilibrium) {
        if eq.is_verified() {
            save_profiles(path, &eq.p1, &eq.p2)?;
        }
    }
    Ok(report)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<RunReport, CliError> {
    let game = load(&args.game)?;
    let (p1, p2) = load_profiles(&args.profiles, &game)?;
    let mut report = RunReport::new(&game);
    report.equilibrium = Some(verify_equilibrium(&game, &p1, &p2, rounding_tolerance(&game, args.tol)));
    Ok(report)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunReport, CliError> {
    let game = load(&args.game)?;
    let (p1, p2) = load_profiles(&args.profiles, &game)?;
    let initial_state = args
        .initial_state
        .clone()
        .unwrap_or_else(|| game.space().label(0).to_string());
    let horizon = match args.cutoff {
        Some(steps) => HorizonMode::DiscountedCutoff(steps),
        None => HorizonMode::GeometricKilling,
    };
    let cfg = SimulationConfig {
        samples: args.samples,
        seed: args.seed,
        initial_state: initial_state.clone(),
        horizon_mode: horizon,
    };
    let estimate = estimate_payoffs(&game, &p1, &p2, &cfg)?;
    let x0 = game.space().index_of(&initial_state).expect("checked by the simulator");
    let (v1, v2) = evaluate_payoffs(&game, &p1, &p2).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report = RunReport::new(&game);
    report.simulation = Some(SimulationSummary {
        initial_state,
        seed: args.seed,
        horizon,
        estimate,
        exact: [v1[x0], v2[x0]],
    });
    Ok(report)
}

pub fn render(report: &RunReport, format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::Usage(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        OutputFormat::Text => Ok(text::render(report)),
    }
}

/// Runs one command, writing the report to `out`.
pub fn run(cli: &Cli, out: &mut impl Write) -> Result<Status, CliError> {
    let (report, format) = match &cli.command {
        Command::Solve(a) => (cmd_solve(a)?, a.output),
        Command::Verify(a) => (cmd_verify(a)?, a.output),
        Command::Simulate(a) => (cmd_simulate(a)?, a.output),
    };
    out.write_all(render(&report, format)?.as_bytes())?;
    Ok(report.status())
}
