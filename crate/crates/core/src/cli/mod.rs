//! `tsvar` command line.
//!
//! Exit codes: 0 success, 1 validation or input error, 2 solver
//! non-convergence.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::newton::SolverOptions;
use crate::optimal_control::{solve_oc, ControlProblem, ControlState};
use crate::problems::{limit_sweep, CatalogProblem, ParamValue, QuantumLqFamily, Refinement, SweepReport};
use crate::timescale::{Grid, TimeScaleSpec};
use crate::variational::{solve_el, Trajectory};

use config::ProblemConfig;
use report::{Residuals, SolveReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tsvar", version, about = "Delayed variational and optimal-control problems on time scales")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the grid points and graininess as CSV.
    Grid {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Solve a variational problem.
    SolveEl {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve an optimal-control problem.
    SolveOc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Residuals of a given trajectory, without solving.
    Residuals {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve a quantum_lq catalog problem (alpha0 = 0) for a list of q and
    /// compare with the continuum solutions.
    LimitSweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated values in (0, 1).
        #[arg(long)]
        q_list: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 9)]
        probes: usize,
    },
}

enum Failure {
    Invalid(Error),
    NoConvergence,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e)
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
        Err(Failure::NoConvergence) => EXIT_NO_CONVERGENCE,
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Grid { q, h, b, steps } => cmd_grid(q, h, b, steps).map_err(Failure::from),
        Command::SolveEl { config, output, csv } => cmd_solve_el(&config, &output, csv.as_deref()),
        Command::SolveOc { config, output, csv } => cmd_solve_oc(&config, &output, csv.as_deref()),
        Command::Residuals { config, trajectory, output } => {
            cmd_residuals(&config, &trajectory, output.as_deref()).map_err(Failure::from)
        }
        Command::LimitSweep { config, q_list, output, probes } => cmd_limit_sweep(&config, &q_list, &output, probes),
    }
}

fn cmd_grid(q: f64, h: f64, b: f64, steps: usize) -> Result<()> {
    let grid = Grid::build(TimeScaleSpec::new(q, h)?, b, steps)?;
    let mut out = std::io::stdout().lock();
    let io = |e: std::io::Error| Error::Config(e.to_string());
    writeln!(out, "index,t,nu").map_err(io)?;
    for j in 0..grid.len() {
        writeln!(out, "{j},{},{}", report::fmt_num(grid.point(j)), report::fmt_num(grid.nu(j))).map_err(io)?;
    }
    Ok(())
}

fn is_solver_failure(e: &Error) -> bool {
    matches!(e, Error::NoConvergence { .. } | Error::SingularSystem { .. })
}

fn cmd_solve_el(config: &Path, output: &Path, csv: Option<&Path>) -> std::result::Result<(), Failure> {
    let cfg = ProblemConfig::load(config)?;
    let CatalogProblem::Variational(p) = cfg.build()? else {
        return Err(Error::Config("solve-el needs a variational problem; use solve-oc for [control] configs".into()).into());
    };
    let opts = cfg.solver_options();
    let init = p.initial_guess();
    let (y, iterations, error) = match solve_el(&p, &init, &opts) {
        Ok(s) => (s.trajectory, Some(s.iterations), None),
        Err(Error::NoConvergence { iterations, last, residual }) => (
            p.assemble(&last),
            Some(iterations),
            Some(Error::NoConvergence { iterations, residual, last: Vec::new() }.to_string()),
        ),
        Err(e) if is_solver_failure(&e) => (init, None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let converged = error.is_none();
    let report = SolveReport {
        command: "solve-el".into(),
        config: &cfg,
        converged,
        iterations,
        error,
        functional: p.evaluate_functional(&y).ok(),
        residuals: p.el_residuals(&y).ok().map(Residuals::Variational),
        trajectory: report::variational_rows(p.grid(), &y),
    };
    finish(&report, output, csv, p.n(), None, converged)
}

fn cmd_solve_oc(config: &Path, output: &Path, csv: Option<&Path>) -> std::result::Result<(), Failure> {
    let cfg = ProblemConfig::load(config)?;
    let CatalogProblem::Control(p) = cfg.build()? else {
        return Err(Error::Config("solve-oc needs a [control] section or a control catalog entry".into()).into());
    };
    let opts = cfg.solver_options();
    let init = p.initial_guess();
    let (s, iterations, error) = match solve_oc(&p, &init, &opts) {
        Ok(sol) => (sol.state, Some(sol.iterations), None),
        Err(Error::NoConvergence { iterations, last, residual }) => (
            p.unpack(&last),
            Some(iterations),
            Some(Error::NoConvergence { iterations, residual, last: Vec::new() }.to_string()),
        ),
        Err(e) if is_solver_failure(&e) => (init, None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let converged = error.is_none();
    let report = SolveReport {
        command: "solve-oc".into(),
        config: &cfg,
        converged,
        iterations,
        error,
        functional: p.performance_index(&s).ok(),
        residuals: p.oc_residuals(&s).ok().map(Residuals::Control),
        trajectory: report::control_rows(&p, &s),
    };
    finish(&report, output, csv, p.n(), Some(p.m()), converged)
}

fn finish<C: Serialize>(
    report: &SolveReport<C>,
    output: &Path,
    csv: Option<&Path>,
    n: usize,
    m: Option<usize>,
    converged: bool,
) -> std::result::Result<(), Failure> {
    report::write_json(output, report)?;
    if let Some(path) = csv {
        report::write_csv_file(path, &report.trajectory, n, m)?;
    }
    if converged {
        Ok(())
    } else {
        if let Some(e) = &report.error {
            eprintln!("error: {e}");
        }
        Err(Failure::NoConvergence)
    }
}

#[derive(Serialize)]
struct ResidualsOutput<'a> {
    command: &'static str,
    config: &'a ProblemConfig,
    functional: f64,
    residuals: Residuals,
}

fn check_times(grid: &Grid, t: &[f64]) -> Result<()> {
    if t.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("trajectory has {} rows, grid has {}", t.len(), grid.len())));
    }
    for (j, (&a, &b)) in t.iter().zip(grid.points()).enumerate() {
        if (a - b).abs() > 1e-9 * b.abs().max(1.0) {
            return Err(Error::ShapeMismatch(format!("row {j}: t = {a} but the grid point is {b}")));
        }
    }
    Ok(())
}

fn control_state_from(p: &ControlProblem, table: &report::CsvTable) -> Result<ControlState> {
    let mut s = p.initial_guess();
    s.y = Trajectory::from_rows(&table.y)?;
    for j in p.a_index()..p.grid().last() {
        let r = j - p.a_index();
        let missing = || Error::ShapeMismatch(format!("row {j}: control and multiplier are required"));
        s.u.row_mut(r).copy_from_slice(table.u[j].as_deref().ok_or_else(missing)?);
        s.lambda.row_mut(r).copy_from_slice(table.lambda[j].as_deref().ok_or_else(missing)?);
    }
    Ok(s)
}

fn cmd_residuals(config: &Path, trajectory: &Path, output: Option<&Path>) -> Result<()> {
    let cfg = ProblemConfig::load(config)?;
    let problem = cfg.build()?;
    let file = std::fs::File::open(trajectory)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", trajectory.display())))?;
    let (functional, residuals) = match &problem {
        CatalogProblem::Variational(p) => {
            let table = report::read_csv(file, p.n(), None)?;
            check_times(p.grid(), &table.t)?;
            let y = Trajectory::from_rows(&table.y)?;
            (p.evaluate_functional(&y)?, Residuals::Variational(p.el_residuals(&y)?))
        }
        CatalogProblem::Control(p) => {
            let table = report::read_csv(file, p.n(), Some(p.m()))?;
            check_times(p.grid(), &table.t)?;
            let s = control_state_from(p, &table)?;
            (p.performance_index(&s)?, Residuals::Control(p.oc_residuals(&s)?))
        }
    };
    let out = ResidualsOutput { command: "residuals", config: &cfg, functional, residuals };
    match output {
        Some(path) => report::write_json(path, &out),
        None => {
            let text = serde_json::to_string_pretty(&out).map_err(|e| Error::Config(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    command: &'static str,
    config: &'a ProblemConfig,
    a: f64,
    b: f64,
    probes: Vec<f64>,
    #[serde(flatten)]
    sweep: SweepReport,
}

fn parse_q_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let q: f64 = s.trim().parse().map_err(|_| Error::Config(format!("bad q value '{}'", s.trim())))?;
            if q > 0.0 && q < 1.0 {
                Ok(q)
            } else {
                Err(Error::BadRange(format!("q-list values must lie in (0, 1), got {q}")))
            }
        })
        .collect()
}

fn number(params: &crate::problems::CatalogParams, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Number(v)) => Ok(*v),
        Some(ParamValue::Text(t)) => Err(Error::Config(format!("limit-sweep needs a numeric '{key}', got '{t}'"))),
    }
}

fn cmd_limit_sweep(config: &Path, q_list: &str, output: &Path, probes: usize) -> std::result::Result<(), Failure> {
    let cfg = ProblemConfig::load(config)?;
    let qs = parse_q_list(q_list)?;
    if probes < 2 {
        return Err(Error::Config("--probes must be at least 2".into()).into());
    }
    let catalog = match &cfg.catalog {
        Some(c) if c.name == "quantum_lq" => c,
        _ => return Err(Error::Config("limit-sweep needs a config with [catalog] name = \"quantum_lq\"".into()).into()),
    };
    // Validates the parameters as a whole.
    let CatalogProblem::Control(base) = cfg.build()? else { unreachable!("quantum_lq builds a control problem") };
    if base.alpha0() != 0 {
        return Err(Error::Config("limit-sweep needs alpha0 = 0".into()).into());
    }
    let params = &catalog.params;
    let (a, b) = (base.grid().point(0), base.grid().point(base.grid().last()));
    let family = QuantumLqFamily {
        r: number(params, "r", 1.0)?,
        b,
        phi: number(params, "phi", 1.0)?,
        c: number(params, "c", 0.0)?,
    };
    let levels: Vec<Refinement> = qs
        .iter()
        .map(|&q| Refinement { q, h: 0.0, steps: ((a / b).ln() / q.ln()).round().max(1.0) as usize })
        .collect();
    let lo = a + 0.05 * (b - a);
    let probe_points: Vec<f64> =
        (0..probes).map(|k| lo + (b - lo) * k as f64 / (probes - 1) as f64).collect();
    let opts: SolverOptions = cfg.solver_options();
    let sweep = limit_sweep(&family, &levels, &probe_points, &opts);
    let all_failed = sweep.all_failed();
    let out = SweepOutput { command: "limit-sweep", config: &cfg, a, b, probes: probe_points, sweep };
    report::write_json(output, &out)?;
    if all_failed {
        eprintln!("error: every refinement level failed");
        return Err(Failure::NoConvergence);
    }
    Ok(())
}
