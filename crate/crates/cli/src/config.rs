//! Experiment configuration files.
//!
//! A config is a small TOML document with five kinds of sections:
//!
//! ```toml
//! [model]
//! lambda_q = 0.1
//! mu_u = 1
//! mu_q = 1
//!
//! [sweep]
//! param = "lambda_u"
//! start = 0.05
//! stop = 0.85
//! step = 0.05
//!
//! [policy.query]
//! kind = "query-k"
//! k = [1, 3]
//! engine = "all"
//!
//! [sim]
//! horizon = 20000
//! replications = 10
//! seed = 1
//!
//! [output]
//! csv = "fig2.csv"
//! ```
//!
//! Thresholds accept an integer, `"inf"`, or a list of either; a list
//! expands into one policy per value (a grid for `m` and `n`).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use freshsched_core::sim::SimConfig;
use freshsched_core::{Metric, ModelParams, PolicySpec, Threshold};
use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

/// Which pipelines evaluate a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    ClosedForm,
    Ctmc,
    Simulation,
    All,
}

impl Engine {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "closed_form" => Some(Engine::ClosedForm),
            "ctmc" => Some(Engine::Ctmc),
            "simulation" => Some(Engine::Simulation),
            "all" => Some(Engine::All),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::ClosedForm => "closed_form",
            Engine::Ctmc => "ctmc",
            Engine::Simulation => "simulation",
            Engine::All => "all",
        }
    }

    /// Whether this engine can evaluate `policy` at all.
    pub fn supports(self, policy: &PolicySpec) -> bool {
        match self {
            Engine::ClosedForm => matches!(
                policy,
                PolicySpec::Fcfs
                    | PolicySpec::QueryK(Threshold::Finite(1))
                    | PolicySpec::UpdateK(Threshold::Finite(1))
            ),
            Engine::Ctmc => matches!(
                policy,
                PolicySpec::QueryK(Threshold::Finite(_)) | PolicySpec::UpdateK(Threshold::Finite(_))
            ),
            Engine::Simulation | Engine::All => true,
        }
    }

    /// Concrete engines this selection runs for `policy`, in output order.
    /// An explicit engine is kept even when unsupported so that the
    /// experiment can report it.
    pub fn expand(self, policy: &PolicySpec) -> Vec<Engine> {
        match self {
            Engine::All => [Engine::ClosedForm, Engine::Ctmc, Engine::Simulation]
                .into_iter()
                .filter(|e| e.supports(policy))
                .collect(),
            single => vec![single],
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The rate a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rate {
    LambdaU,
    LambdaQ,
    MuU,
    MuQ,
}

impl Rate {
    pub const ALL: [Rate; 4] = [Rate::LambdaU, Rate::LambdaQ, Rate::MuU, Rate::MuQ];

    pub fn name(self) -> &'static str {
        match self {
            Rate::LambdaU => "lambda_u",
            Rate::LambdaQ => "lambda_q",
            Rate::MuU => "mu_u",
            Rate::MuQ => "mu_q",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Rate::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn of(self, params: &ModelParams) -> f64 {
        match self {
            Rate::LambdaU => params.lambda_u(),
            Rate::LambdaQ => params.lambda_q(),
            Rate::MuU => params.mu_u(),
            Rate::MuQ => params.mu_q(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub rate: Rate,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    const MAX_POINTS: usize = 100_000;

    /// Grid values `start, start + step, ...` up to `stop`, rounded to 12
    /// decimals so accumulated float error does not leak into the output.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err(invalid("sweep bounds must be finite"));
        }
        if self.step <= 0.0 {
            return Err(invalid("sweep step must be positive so the axis is strictly increasing"));
        }
        if self.stop < self.start {
            return Err(invalid("sweep stop must not be below start"));
        }
        if (self.stop - self.start) / self.step >= Self::MAX_POINTS as f64 {
            return Err(invalid(format!("sweep has more than {} points", Self::MAX_POINTS)));
        }
        Ok(())
    }
}

/// One policy to evaluate, with the engines requested for it.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    /// Section name the entry came from.
    pub name: String,
    pub policy: PolicySpec,
    pub engine: Engine,
}

/// Axis for plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Rate(Rate),
    /// Offered update load `lambda_u / mu_u`.
    RhoU,
    K,
    M,
    N,
}

impl PlotAxis {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "rho_u" => Some(PlotAxis::RhoU),
            "k" => Some(PlotAxis::K),
            "m" => Some(PlotAxis::M),
            "n" => Some(PlotAxis::N),
            other => Rate::from_name(other).map(PlotAxis::Rate),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlotAxis::Rate(r) => r.name(),
            PlotAxis::RhoU => "rho_u",
            PlotAxis::K => "k",
            PlotAxis::M => "m",
            PlotAxis::N => "n",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub plot_x: Option<PlotAxis>,
    pub plot_metrics: Vec<Metric>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Operating points in sweep order (a single point without a sweep).
    pub points: Vec<ModelParams>,
    pub sweep: Option<Sweep>,
    pub policies: Vec<PolicyEntry>,
    pub metrics: Vec<Metric>,
    pub sim: SimConfig,
    /// Uniform truncation for chain solves; adaptive when absent.
    pub truncation: Option<u32>,
    pub output: OutputSpec,
}

impl ExperimentSpec {
    /// A one-point experiment with default simulation settings.
    pub fn single(params: ModelParams, policies: Vec<PolicyEntry>, sim: SimConfig) -> Self {
        Self {
            points: vec![params],
            sweep: None,
            policies,
            metrics: Metric::REPORTED.to_vec(),
            sim,
            truncation: None,
            output: OutputSpec::default(),
        }
    }

    /// Rows a run of this spec produces.
    pub fn expected_rows(&self) -> usize {
        let engines: usize = self
            .policies
            .iter()
            .map(|p| p.engine.expand(&p.policy).len())
            .sum();
        self.points.len() * engines * self.metrics.len()
    }

    /// Rejects engine selections a policy cannot use.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.policies.is_empty() {
            return Err(invalid("at least one [policy.<name>] section is required"));
        }
        if self.metrics.is_empty() {
            return Err(invalid("metric list is empty"));
        }
        for entry in &self.policies {
            if !entry.engine.supports(&entry.policy) {
                return Err(invalid(format!(
                    "policy.{}: engine {} does not support {}",
                    entry.name, entry.engine, entry.policy
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Raw document
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: RawModel,
    sweep: Option<RawSweep>,
    #[serde(default)]
    policy: IndexMap<String, RawPolicy>,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    lambda_u: Option<f64>,
    lambda_q: Option<f64>,
    mu_u: Option<f64>,
    mu_q: Option<f64>,
    ctmc_truncation: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    param: String,
    start: f64,
    stop: f64,
    step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawThreshold {
    Count(i64),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawThresholds {
    One(RawThreshold),
    Many(Vec<RawThreshold>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    kind: String,
    k: Option<RawThresholds>,
    m: Option<RawThresholds>,
    n: Option<RawThresholds>,
    engine: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    horizon: Option<f64>,
    warmup: Option<f64>,
    replications: Option<u32>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<PathBuf>,
    plot: Option<PathBuf>,
    metrics: Option<Vec<String>>,
    plot_x: Option<String>,
    plot_metrics: Option<Vec<String>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a threshold word: a positive integer or `inf`.
pub fn parse_threshold(word: &str) -> Option<Threshold> {
    match word.trim() {
        "inf" | "infinity" => Some(Threshold::Unbounded),
        digits => digits.parse::<u32>().ok().and_then(|k| Threshold::finite(k).ok()),
    }
}

fn thresholds(section: &str, key: &str, raw: &Option<RawThresholds>) -> Result<Vec<Threshold>, ConfigError> {
    let one = |t: &RawThreshold| match t {
        RawThreshold::Count(k) => u32::try_from(*k)
            .ok()
            .and_then(|k| Threshold::finite(k).ok())
            .ok_or_else(|| invalid(format!("policy.{section}: {key} = {k} must be at least 1"))),
        RawThreshold::Word(w) => parse_threshold(w)
            .ok_or_else(|| invalid(format!("policy.{section}: {key} = {w:?} is not a threshold"))),
    };
    match raw {
        None => Err(invalid(format!("policy.{section}: missing {key}"))),
        Some(RawThresholds::One(t)) => Ok(vec![one(t)?]),
        Some(RawThresholds::Many(ts)) if ts.is_empty() => {
            Err(invalid(format!("policy.{section}: {key} list is empty")))
        }
        Some(RawThresholds::Many(ts)) => ts.iter().map(one).collect(),
    }
}

fn expand_policy(name: &str, raw: &RawPolicy) -> Result<Vec<PolicyEntry>, ConfigError> {
    let engine = match raw.engine.as_deref() {
        None => Engine::All,
        Some(e) => Engine::from_name(e).ok_or_else(|| {
            invalid(format!(
                "policy.{name}: unknown engine {e:?} (expected closed_form, ctmc, simulation or all)"
            ))
        })?,
    };
    let unexpected = |key: &str, present: bool| {
        if present {
            Err(invalid(format!("policy.{name}: key {key} does not apply to {}", raw.kind)))
        } else {
            Ok(())
        }
    };
    let policies = match raw.kind.as_str() {
        "fcfs" => {
            unexpected("k", raw.k.is_some())?;
            unexpected("m", raw.m.is_some())?;
            unexpected("n", raw.n.is_some())?;
            vec![PolicySpec::Fcfs]
        }
        "query-k" | "update-k" => {
            unexpected("m", raw.m.is_some())?;
            unexpected("n", raw.n.is_some())?;
            let ks = thresholds(name, "k", &raw.k)?;
            ks.into_iter()
                .map(|k| match raw.kind.as_str() {
                    "query-k" => PolicySpec::QueryK(k),
                    _ => PolicySpec::UpdateK(k),
                })
                .collect()
        }
        "joint" => {
            unexpected("k", raw.k.is_some())?;
            let ms = thresholds(name, "m", &raw.m)?;
            let ns = thresholds(name, "n", &raw.n)?;
            let mut out = Vec::new();
            for &m in &ms {
                for &n in &ns {
                    out.push(PolicySpec::joint(m, n).map_err(|e| invalid(format!("policy.{name}: {e}")))?);
                }
            }
            out
        }
        other => {
            return Err(invalid(format!(
                "policy.{name}: unknown kind {other:?} (expected fcfs, query-k, update-k or joint)"
            )))
        }
    };
    Ok(policies
        .into_iter()
        .map(|policy| PolicyEntry {
            name: name.to_string(),
            policy,
            engine,
        })
        .collect())
}

fn metric_list(key: &str, names: &Option<Vec<String>>) -> Result<Vec<Metric>, ConfigError> {
    match names {
        None => Ok(Metric::REPORTED.to_vec()),
        Some(names) => names
            .iter()
            .map(|n| {
                Metric::from_name(n)
                    .filter(|m| Metric::REPORTED.contains(m))
                    .ok_or_else(|| invalid(format!("output.{key}: unknown metric {n:?}")))
            })
            .collect(),
    }
}

fn build(raw: RawConfig) -> Result<ExperimentSpec, ConfigError> {
    let m = &raw.model;
    let fixed = [m.lambda_u, m.lambda_q, m.mu_u, m.mu_q];

    let sweep = match &raw.sweep {
        None => None,
        Some(s) => {
            let rate = Rate::from_name(&s.param)
                .ok_or_else(|| invalid(format!("sweep.param {:?} is not a rate", s.param)))?;
            let sweep = Sweep {
                rate,
                start: s.start,
                stop: s.stop,
                step: s.step,
            };
            sweep.validate()?;
            Some(sweep)
        }
    };

    for (rate, value) in Rate::ALL.iter().zip(fixed) {
        let swept = sweep.map(|s| s.rate) == Some(*rate);
        match (value, swept) {
            (Some(_), true) => {
                return Err(invalid(format!("model.{} is also the sweep parameter", rate.name())))
            }
            (None, false) => return Err(invalid(format!("model.{} is required", rate.name()))),
            _ => {}
        }
    }

    let rates_at = |x: Option<f64>| -> [f64; 4] {
        let mut r = fixed.map(|v| v.unwrap_or(0.0));
        if let (Some(s), Some(x)) = (sweep, x) {
            r[Rate::ALL.iter().position(|&q| q == s.rate).unwrap()] = x;
        }
        r
    };
    let xs: Vec<Option<f64>> = match sweep {
        Some(s) => s.values().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let points = xs
        .into_iter()
        .map(|x| {
            let [lu, lq, mu, mq] = rates_at(x);
            ModelParams::new(lu, mu, lq, mq).map_err(|e| invalid(format!("model: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut policies = Vec::new();
    for (name, p) in &raw.policy {
        policies.extend(expand_policy(name, p)?);
    }

    let s = &raw.sim;
    let sim = SimConfig::new(
        s.horizon.unwrap_or(SimConfig::DEFAULT_HORIZON),
        s.warmup.unwrap_or(0.0),
        s.replications.unwrap_or(SimConfig::DEFAULT_REPLICATIONS),
        s.seed.unwrap_or(1),
    )
    .map_err(|e| invalid(format!("sim: {e}")))?;

    if let Some(c) = m.ctmc_truncation {
        if c < 3 {
            return Err(invalid("model.ctmc_truncation must be at least 3"));
        }
    }

    let o = &raw.output;
    let plot_x = match &o.plot_x {
        None => None,
        Some(x) => Some(
            PlotAxis::from_name(x).ok_or_else(|| invalid(format!("output.plot_x {x:?} is not an axis")))?,
        ),
    };
    let spec = ExperimentSpec {
        points,
        sweep,
        policies,
        metrics: metric_list("metrics", &o.metrics)?,
        sim,
        truncation: m.ctmc_truncation,
        output: OutputSpec {
            csv: o.csv.clone(),
            plot: o.plot.clone(),
            plot_x,
            plot_metrics: metric_list("plot_metrics", &o.plot_metrics)?,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Parses and validates config text.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    build(raw)
}

/// Reads, parses and validates a config file. Relative output paths are
/// kept as written (relative to the working directory).
pub fn parse_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"
[model]
lambda_q = 0.1
mu_u = 1
mu_q = 1

[sweep]
param = "lambda_u"
start = 0.05
stop = 0.85
step = 0.05

[policy.fcfs]
kind = "fcfs"

[policy.query1]
kind = "query-k"
k = 1

[policy.query3]
kind = "query-k"
k = 3
"#;

    #[test]
    fn update_load_grid() {
        let spec = parse_config_str(FIG2).unwrap();
        assert_eq!(spec.points.len(), 17);
        assert_eq!(spec.points[0].lambda_u(), 0.05);
        assert_eq!(spec.points[16].lambda_u(), 0.85);
        assert!(spec.points.iter().all(|p| p.lambda_q() == 0.1 && p.mu_u() == 1.0));
        let names: Vec<String> = spec.policies.iter().map(|p| p.policy.to_string()).collect();
        assert_eq!(names, ["FCFS", "Query-1", "Query-3"]);
        assert_eq!(spec.sim, SimConfig::standard(1));
        // FCFS: analytic + sim; Query-1: all three; Query-3: chain + sim.
        assert_eq!(spec.expected_rows(), 17 * 7 * 5);
    }

    #[test]
    fn misspelled_key_is_a_parse_error() {
        let text = "[model]\nlamda_u = 0.5\nlambda_q = 0.1\nmu_u = 1\nmu_q = 1\n";
        match parse_config_str(text) {
            Err(ConfigError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("lamda_u"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_step_is_a_validation_error() {
        let text = FIG2.replace("step = 0.05", "step = 0");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "[model]\nlambda_u = 0.5\nlambda_q = = 0.1\n";
        match parse_config_str(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_engine_is_rejected() {
        let text = r#"
[model]
lambda_u = 0.3
lambda_q = 0.3
mu_u = 1
mu_q = 1
[policy.j]
kind = "joint"
m = 2
n = 3
engine = "ctmc"
"#;
        match parse_config_str(text) {
            Err(ConfigError::Validation(msg)) => assert!(msg.contains("ctmc"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn threshold_lists_expand() {
        let text = r#"
[model]
lambda_u = 0.3
lambda_q = 0.3
mu_u = 1
mu_q = 1
[policy.q]
kind = "query-k"
k = [1, 2, "inf"]
engine = "simulation"
[policy.j]
kind = "joint"
m = [1, 3]
n = [1, 3]
"#;
        let spec = parse_config_str(text).unwrap();
        let names: Vec<String> = spec.policies.iter().map(|p| p.policy.to_string()).collect();
        assert_eq!(
            names,
            ["Query-1", "Query-2", "Query-inf", "Joint-(1,1)", "Joint-(1,3)", "Joint-(3,1)", "Joint-(3,3)"]
        );
    }

    #[test]
    fn missing_rate_and_double_rate() {
        let text = "[model]\nlambda_u = 0.5\nmu_u = 1\nmu_q = 1\n[policy.f]\nkind = \"fcfs\"\n";
        assert!(matches!(parse_config_str(text), Err(ConfigError::Validation(_))));
        let text = FIG2.replace("[model]", "[model]\nlambda_u = 0.3");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn bad_threshold_values() {
        for k in ["0", "-2", "\"many\""] {
            let text = FIG2.replace("k = 3", &format!("k = {k}"));
            assert!(matches!(parse_config_str(&text), Err(ConfigError::Validation(_))), "{k}");
        }
    }

    #[test]
    fn sweep_grid_has_no_float_drift() {
        let s = Sweep {
            rate: Rate::LambdaU,
            start: 0.1,
            stop: 0.7,
            step: 0.1,
        };
        assert_eq!(s.values(), [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
    }

    #[test]
    fn engine_expansion() {
        let q3 = PolicySpec::query_k(3).unwrap();
        assert_eq!(Engine::All.expand(&q3), [Engine::Ctmc, Engine::Simulation]);
        assert_eq!(Engine::All.expand(&PolicySpec::Fcfs), [Engine::ClosedForm, Engine::Simulation]);
        let inf = PolicySpec::QueryK(Threshold::Unbounded);
        assert_eq!(Engine::All.expand(&inf), [Engine::Simulation]);
        assert_eq!(Engine::Ctmc.expand(&PolicySpec::Fcfs), [Engine::Ctmc]);
    }
}
