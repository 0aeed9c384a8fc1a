//! Subcommands of the `freshsched` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freshsched_core::analytic::{self, AnalyticError, Truncation};
use freshsched_core::sim::SimConfig;
use freshsched_core::{Metric, ModelError, ModelParams, PolicySpec, Threshold};

use crate::config::{parse_config, parse_threshold, ConfigError, Engine, ExperimentSpec, PlotAxis, PolicyEntry};
use crate::experiment::{run_experiment, ResultRow, Source, Status};
use crate::plot::{emit_plot, PlotError};
use crate::table::{emit_csv, format_sig6, read_csv, write_csv, TableError};

/// Process exit status for each failure class.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, config or parameters.
    Validation(String),
    /// A solver did not converge or its truncation could not be made small enough.
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Malformed { .. } => Failure::Validation(e.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<PlotError> for Failure {
    fn from(e: PlotError) -> Self {
        match e {
            PlotError::NoData => Failure::Validation(e.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<AnalyticError> for Failure {
    fn from(e: AnalyticError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "freshsched", version, about = "Query/update scheduling: response time vs. information freshness")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form metrics (FCFS, Query-1, Update-1).
    Analyze(PointCommand),
    /// Truncated Markov chain solution (Query-k, Update-k with finite k).
    Solve(PointCommand),
    /// Simulate one operating point.
    Simulate(PointCommand),
    /// Run every engine available for a policy and compare them.
    Compare(PointCommand),
    /// Run a configuration file.
    Sweep(SweepCommand),
    /// Draw an SVG chart from a result table.
    Plot(PlotCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyKind {
    Fcfs,
    QueryK,
    UpdateK,
    Joint,
}

fn threshold_arg(s: &str) -> Result<Threshold, String> {
    parse_threshold(s).ok_or_else(|| format!("{s:?} is not a positive integer or \"inf\""))
}

#[derive(Debug, Args)]
struct PointArgs {
    #[arg(long = "lambda-u")]
    lambda_u: f64,
    #[arg(long = "lambda-q")]
    lambda_q: f64,
    #[arg(long = "mu-u", default_value_t = 1.0)]
    mu_u: f64,
    #[arg(long = "mu-q", default_value_t = 1.0)]
    mu_q: f64,
    #[arg(long, value_enum, default_value = "fcfs")]
    policy: PolicyKind,
    /// Threshold of Query-k / Update-k (integer or "inf").
    #[arg(long, value_parser = threshold_arg)]
    k: Option<Threshold>,
    /// Update threshold M of Joint-(M,N).
    #[arg(long, value_parser = threshold_arg)]
    m: Option<Threshold>,
    /// Query threshold N of Joint-(M,N).
    #[arg(long, value_parser = threshold_arg)]
    n: Option<Threshold>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = SimConfig::DEFAULT_HORIZON)]
    horizon: f64,
    #[arg(long, default_value_t = SimConfig::DEFAULT_REPLICATIONS)]
    reps: u32,
    #[arg(long, default_value_t = 0.0)]
    warmup: f64,
    #[arg(long, env = "FRESHSCHED_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PointCommand {
    #[command(flatten)]
    point: PointArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Uniform truncation of the Markov chain; adaptive when omitted.
    #[arg(long)]
    trunc: Option<u32>,
    /// Also write the rows as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepCommand {
    #[arg(long)]
    config: PathBuf,
    /// CSV path; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides FRESHSCHED_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PlotCommand {
    /// Result table written by another subcommand.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Horizontal axis: lambda_u, lambda_q, mu_u, mu_q, rho_u, k, m or n.
    #[arg(long, value_parser = axis_arg)]
    x: PlotAxis,
    /// Comma-separated metrics, one panel each.
    #[arg(long, value_delimiter = ',', value_parser = metric_arg, default_value = "response_time,paoi")]
    metrics: Vec<Metric>,
}

fn axis_arg(s: &str) -> Result<PlotAxis, String> {
    PlotAxis::from_name(s).ok_or_else(|| format!("unknown axis {s:?}"))
}

fn metric_arg(s: &str) -> Result<Metric, String> {
    Metric::from_name(s)
        .filter(|m| Metric::REPORTED.contains(m))
        .ok_or_else(|| format!("unknown metric {s:?}"))
}

impl PointArgs {
    fn params(&self) -> Result<ModelParams, Failure> {
        Ok(ModelParams::new(self.lambda_u, self.mu_u, self.lambda_q, self.mu_q)?)
    }

    fn policy(&self) -> Result<PolicySpec, Failure> {
        let need = |t: Option<Threshold>, flag: &str| {
            t.ok_or_else(|| Failure::Validation(format!("--policy {:?} needs --{flag}", self.policy)))
        };
        let reject = |t: Option<Threshold>, flag: &str| match t {
            Some(_) => Err(Failure::Validation(format!("--{flag} does not apply to --policy {:?}", self.policy))),
            None => Ok(()),
        };
        let spec = match self.policy {
            PolicyKind::Fcfs => {
                reject(self.k, "k")?;
                reject(self.m, "m")?;
                reject(self.n, "n")?;
                PolicySpec::Fcfs
            }
            PolicyKind::QueryK | PolicyKind::UpdateK => {
                reject(self.m, "m")?;
                reject(self.n, "n")?;
                let k = need(self.k, "k")?;
                if matches!(self.policy, PolicyKind::QueryK) {
                    PolicySpec::QueryK(k)
                } else {
                    PolicySpec::UpdateK(k)
                }
            }
            PolicyKind::Joint => {
                reject(self.k, "k")?;
                PolicySpec::joint(need(self.m, "m")?, need(self.n, "n")?)?
            }
        };
        Ok(spec)
    }
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig, Failure> {
        SimConfig::new(self.horizon, self.warmup, self.reps, self.seed).map_err(|e| Failure::Validation(e.to_string()))
    }
}

fn write_rows(rows: &[ResultRow], out: &Option<PathBuf>) -> Result<(), Failure> {
    if let Some(path) = out {
        emit_csv(rows, path)?;
    }
    Ok(())
}

fn point_rows(cmd: &PointCommand, policy: PolicySpec, engine: Engine) -> Result<Vec<ResultRow>, Failure> {
    let mut spec = ExperimentSpec::single(
        cmd.point.params()?,
        vec![PolicyEntry {
            name: "cli".into(),
            policy,
            engine,
        }],
        cmd.sim.config()?,
    );
    spec.truncation = cmd.trunc;
    Ok(run_experiment(&spec))
}

fn cell(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_else(|| "n/a".into())
}

fn analyze(cmd: &PointCommand, out: &mut dyn Write) -> Result<(), Failure> {
    let params = cmd.point.params()?;
    let policy = cmd.point.policy()?;
    if !Engine::ClosedForm.supports(&policy) {
        return Err(Failure::Validation(format!(
            "no closed form for {policy}; use `solve` or `simulate`"
        )));
    }
    let r = analytic::closed_form(&params, &policy)?;
    let _ = writeln!(out, "policy  {policy}");
    let _ = writeln!(out, "rho     {}", format_sig6(params.rho()));
    let _ = writeln!(out, "E[T_q] = {}", format_sig6(r.expected_response_time));
    let _ = writeln!(out, "E[T_u] = {}", format_sig6(r.expected_update_system_time));
    let _ = writeln!(out, "E[A]   = {}", format_sig6(r.expected_paoi));
    let _ = writeln!(out, "E[N_q] = {}", format_sig6(r.expected_nq));
    let _ = writeln!(out, "E[N_u] = {}", format_sig6(r.expected_nu));
    if cmd.out.is_some() {
        write_rows(&point_rows(cmd, policy, Engine::ClosedForm)?, &cmd.out)?;
    }
    Ok(())
}

fn solve(cmd: &PointCommand, out: &mut dyn Write) -> Result<(), Failure> {
    let params = cmd.point.params()?;
    let policy = cmd.point.policy()?;
    if !Engine::Ctmc.supports(&policy) {
        return Err(Failure::Validation(format!(
            "the chain solver handles Query-k and Update-k with finite k, not {policy}"
        )));
    }
    let trunc = cmd.trunc.map(Truncation::uniform);
    let r = analytic::chain_metrics(&params, &policy, trunc)?;
    let _ = writeln!(out, "policy  {policy}");
    let _ = writeln!(out, "rho     {}", format_sig6(params.rho()));
    let _ = writeln!(out, "E[T_q] = {}", format_sig6(r.expected_response_time));
    let _ = writeln!(out, "E[T_u] = {}", format_sig6(r.expected_update_system_time));
    let _ = writeln!(out, "E[A]   = {}", format_sig6(r.expected_paoi));
    let _ = writeln!(out, "E[N_q] = {}", format_sig6(r.expected_nq));
    let _ = writeln!(out, "E[N_u] = {}", format_sig6(r.expected_nu));
    if let Some(d) = r.chain {
        let _ = writeln!(out, "truncation        {} x {} ({} states)", d.truncation.max_q, d.truncation.max_u, d.states);
        let _ = writeln!(out, "balance residual  {:.3e}", d.residual);
        let _ = writeln!(out, "tail mass         {:.3e}", d.tail_mass);
        let _ = writeln!(
            out,
            "conservation gap  {:.3e} ({})",
            d.conservation_gap,
            if d.is_consistent() { "consistent" } else { "INCONSISTENT" }
        );
    }
    if cmd.out.is_some() {
        write_rows(&point_rows(cmd, policy, Engine::Ctmc)?, &cmd.out)?;
    }
    Ok(())
}

fn simulate(cmd: &PointCommand, out: &mut dyn Write) -> Result<(), Failure> {
    let policy = cmd.point.policy()?;
    let rows = point_rows(cmd, policy, Engine::Simulation)?;
    let _ = writeln!(out, "policy  {policy}  ({} x {} time units, seed {})", cmd.sim.reps, cmd.sim.horizon, cmd.sim.seed);
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<14} {:>10} +- {:<10} {}",
            r.metric.name(),
            cell(r.mean),
            cell(r.ci_half_width),
            r.status
        );
    }
    write_rows(&rows, &cmd.out)
}

fn compare(cmd: &PointCommand, out: &mut dyn Write) -> Result<(), Failure> {
    let policy = cmd.point.policy()?;
    let rows = point_rows(cmd, policy, Engine::All)?;
    let _ = writeln!(out, "policy  {policy}");
    let _ = writeln!(out, "{:<14} {:<9} {:>10} {:>10} {:>8}  status", "metric", "source", "mean", "ci", "|d|/ci");
    for r in &rows {
        let sim = rows
            .iter()
            .find(|s| s.metric == r.metric && s.source == Source::Sim && s.status.is_ok());
        let ratio = match (r.source, r.mean, sim.and_then(|s| s.mean.zip(s.ci_half_width))) {
            (Source::Analytic | Source::Ctmc, Some(m), Some((sm, hw))) if hw > 0.0 => {
                format!("{:.2}", (sm - m).abs() / hw)
            }
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "{:<14} {:<9} {:>10} {:>10} {:>8}  {}",
            r.metric.name(),
            r.source.name(),
            cell(r.mean),
            if r.source == Source::Sim { cell(r.ci_half_width) } else { String::new() },
            ratio,
            r.status
        );
    }
    write_rows(&rows, &cmd.out)
}

fn sweep(cmd: &SweepCommand, out: &mut dyn Write) -> Result<(), Failure> {
    let mut spec = parse_config(&cmd.config)?;
    let seed = match cmd.seed {
        Some(s) => Some(s),
        None => match std::env::var("FRESHSCHED_SEED") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Validation(format!("FRESHSCHED_SEED={v:?} is not an integer")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(s) = seed {
        spec.sim.base_seed = s;
    }
    if cmd.out.is_some() {
        spec.output.csv = cmd.out.clone();
    }

    let rows = run_experiment(&spec);
    match &spec.output.csv {
        Some(path) => {
            emit_csv(&rows, path)?;
            let _ = writeln!(out, "wrote {} rows to {}", rows.len(), path.display());
        }
        None => write_csv(&rows, &mut *out).map_err(|e| Failure::Io(e.to_string()))?,
    }
    if let Some(path) = &spec.output.plot {
        let axis = spec
            .output
            .plot_x
            .or(spec.sweep.map(|s| PlotAxis::Rate(s.rate)))
            .ok_or_else(|| Failure::Validation("output.plot needs output.plot_x without a sweep".into()))?;
        emit_plot(&rows, axis, &spec.output.plot_metrics, path)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    let failures: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| matches!(r.status, Status::Failed { numerical: true, .. }))
        .collect();
    if let Some(first) = failures.first() {
        return Err(Failure::Numerical(format!(
            "{} rows failed numerically, first: {} at lambda_u={} lambda_q={}: {}",
            failures.len(),
            first.policy,
            first.params.lambda_u(),
            first.params.lambda_q(),
            first.status
        )));
    }
    Ok(())
}

fn plot(cmd: &PlotCommand, out: &mut dyn Write) -> Result<(), Failure> {
    let rows = read_csv(&cmd.input)?;
    emit_plot(&rows, cmd.x, &cmd.metrics, &cmd.out)?;
    let _ = writeln!(out, "wrote {}", cmd.out.display());
    Ok(())
}

/// Parses `args` and runs the subcommand, writing reports to `out`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(c) => analyze(c, out),
        Command::Solve(c) => solve(c, out),
        Command::Simulate(c) => simulate(c, out),
        Command::Compare(c) => compare(c, out),
        Command::Sweep(c) => sweep(c, out),
        Command::Plot(c) => plot(c, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}
