//! Running an experiment: every point, policy and engine becomes result rows.

use std::fmt;

use freshsched_core::analytic::{self, AnalyticError, ClosedFormResult, Truncation};
use freshsched_core::sim::{self, SimConfig, SimError, SummaryStats};
use freshsched_core::{Metric, ModelError, ModelParams, PolicySpec};
use rayon::prelude::*;

use crate::config::{Engine, ExperimentSpec, PolicyEntry};

/// Where a number came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Analytic,
    Ctmc,
    Sim,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Ctmc => "ctmc",
            Source::Sim => "sim",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Source::Analytic, Source::Ctmc, Source::Sim]
            .into_iter()
            .find(|s| s.name() == name)
    }

    fn of(engine: Engine) -> Self {
        match engine {
            Engine::ClosedForm => Source::Analytic,
            Engine::Ctmc => Source::Ctmc,
            Engine::Simulation | Engine::All => Source::Sim,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    /// `rho >= 1`: no steady state. Simulated values are transient.
    Unstable,
    /// No value for this metric from this source (no samples, no closed
    /// form, or a single replication without a confidence interval).
    NotAvailable,
    UnsupportedEngine,
    /// The engine failed; `numerical` marks solver failures as opposed to
    /// input problems.
    Failed { numerical: bool, message: String },
}

impl Status {
    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }

    pub fn parse(text: &str) -> Self {
        match text {
            "ok" => Status::Ok,
            "unstable" => Status::Unstable,
            "n/a" => Status::NotAvailable,
            "unsupported engine" => Status::UnsupportedEngine,
            other => Status::Failed {
                numerical: other.starts_with("numerical"),
                message: other
                    .split_once(": ")
                    .map(|(_, m)| m.to_string())
                    .unwrap_or_else(|| other.to_string()),
            },
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::Unstable => f.write_str("unstable"),
            Status::NotAvailable => f.write_str("n/a"),
            Status::UnsupportedEngine => f.write_str("unsupported engine"),
            Status::Failed { numerical: true, message } => write!(f, "numerical failure: {message}"),
            Status::Failed { numerical: false, message } => write!(f, "error: {message}"),
        }
    }
}

/// One number of an experiment table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub policy: PolicySpec,
    pub params: ModelParams,
    pub metric: Metric,
    pub source: Source,
    pub mean: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub replications: Option<u32>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub status: Status,
}

/// Outcome of one engine at one point, before it is split into rows.
enum EngineOutcome {
    Formula(ClosedFormResult),
    Simulated(SummaryStats),
    Failed(Status),
}

fn analytic_status(e: &AnalyticError) -> Status {
    match e {
        AnalyticError::Model(ModelError::Unstable(_)) => Status::Unstable,
        AnalyticError::UnsupportedPolicy(_) => Status::UnsupportedEngine,
        other => Status::Failed {
            numerical: other.is_numerical(),
            message: other.to_string(),
        },
    }
}

fn formula_value(r: &ClosedFormResult, metric: Metric) -> Option<f64> {
    match metric {
        Metric::ResponseTime => Some(r.expected_response_time),
        Metric::UpdateSystemTime => Some(r.expected_update_system_time),
        Metric::Paoi => Some(r.expected_paoi),
        Metric::Nq => Some(r.expected_nq),
        Metric::Nu => Some(r.expected_nu),
        Metric::Aoi => None,
    }
}

fn evaluate(
    engine: Engine,
    params: &ModelParams,
    policy: &PolicySpec,
    sim: &SimConfig,
    truncation: Option<u32>,
) -> EngineOutcome {
    if !engine.supports(policy) {
        return EngineOutcome::Failed(Status::UnsupportedEngine);
    }
    match engine {
        Engine::ClosedForm => match analytic::closed_form(params, policy) {
            Ok(r) => EngineOutcome::Formula(r),
            Err(e) => EngineOutcome::Failed(analytic_status(&e)),
        },
        Engine::Ctmc => {
            let trunc = truncation.map(Truncation::uniform);
            match analytic::chain_metrics(params, policy, trunc) {
                Ok(r) => EngineOutcome::Formula(r),
                Err(e) => EngineOutcome::Failed(analytic_status(&e)),
            }
        }
        Engine::Simulation | Engine::All => match sim::simulate_point(params, policy, sim) {
            Ok(s) => EngineOutcome::Simulated(s),
            Err(e) => EngineOutcome::Failed(Status::Failed {
                numerical: false,
                message: match e {
                    SimError::OutOfOrderDeparture { .. } => format!("internal: {e}"),
                    other => other.to_string(),
                },
            }),
        },
    }
}

fn rows_for(
    params: &ModelParams,
    entry: &PolicyEntry,
    metrics: &[Metric],
    sim: &SimConfig,
    truncation: Option<u32>,
) -> Vec<ResultRow> {
    let engines = entry.engine.expand(&entry.policy);
    let outcomes: Vec<(Engine, EngineOutcome)> = engines
        .iter()
        .map(|&e| (e, evaluate(e, params, &entry.policy, sim, truncation)))
        .collect();
    let stable = params.rho() < 1.0;

    let mut rows = Vec::with_capacity(metrics.len() * outcomes.len());
    for &metric in metrics {
        for (engine, outcome) in &outcomes {
            let mut row = ResultRow {
                policy: entry.policy,
                params: *params,
                metric,
                source: Source::of(*engine),
                mean: None,
                ci_half_width: None,
                replications: None,
                horizon: None,
                seed: None,
                status: Status::Ok,
            };
            match outcome {
                EngineOutcome::Formula(r) => {
                    row.mean = formula_value(r, metric);
                    if row.mean.is_none() {
                        row.status = Status::NotAvailable;
                    }
                }
                EngineOutcome::Simulated(s) => {
                    let m = s.get(metric);
                    row.mean = m.mean;
                    row.ci_half_width = m.half_width;
                    row.replications = Some(sim.replications);
                    row.horizon = Some(sim.horizon);
                    row.seed = Some(sim.base_seed);
                    row.status = if !stable {
                        Status::Unstable
                    } else if m.mean.is_none() || m.half_width.is_none() {
                        Status::NotAvailable
                    } else {
                        Status::Ok
                    };
                }
                EngineOutcome::Failed(status) => row.status = status.clone(),
            }
            rows.push(row);
        }
    }
    rows
}

/// Evaluates every point, policy, metric and engine of `spec`.
///
/// Points and policies run in parallel; the result is always in sweep order,
/// then policy, then metric, then source. All simulated policies at a point
/// share the same base seed and therefore the same arrivals and service
/// requirements. Failures become rows with an error status.
pub fn run_experiment(spec: &ExperimentSpec) -> Vec<ResultRow> {
    let jobs: Vec<(&ModelParams, &PolicyEntry)> = spec
        .points
        .iter()
        .flat_map(|p| spec.policies.iter().map(move |e| (p, e)))
        .collect();
    jobs.par_iter()
        .map(|(p, e)| rows_for(p, e, &spec.metrics, &spec.sim, spec.truncation))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use freshsched_core::Threshold;

    fn entry(policy: PolicySpec, engine: Engine) -> PolicyEntry {
        PolicyEntry {
            name: "t".into(),
            policy,
            engine,
        }
    }

    fn point(lu: f64, lq: f64) -> ModelParams {
        ModelParams::new(lu, 1.0, lq, 1.0).unwrap()
    }

    fn short_sim() -> SimConfig {
        SimConfig::new(2_000.0, 0.0, 4, 3).unwrap()
    }

    #[test]
    fn fcfs_all_engines() {
        let spec = ExperimentSpec::single(
            point(0.5, 0.1),
            vec![entry(PolicySpec::Fcfs, Engine::All)],
            short_sim(),
        );
        let rows = run_experiment(&spec);
        assert_eq!(rows.len(), spec.expected_rows());
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].source, Source::Analytic);
        assert_eq!(rows[0].metric, Metric::ResponseTime);
        assert_eq!(rows[0].mean, Some(2.5));
        assert_eq!(rows[1].source, Source::Sim);
        let aoi = rows.iter().find(|r| r.metric == Metric::Aoi && r.source == Source::Analytic);
        assert_eq!(aoi.unwrap().status, Status::NotAvailable);
    }

    #[test]
    fn joint_with_chain_engine_is_marked() {
        let joint = PolicySpec::joint(Threshold::Finite(2), Threshold::Finite(2)).unwrap();
        let spec = ExperimentSpec::single(point(0.3, 0.3), vec![entry(joint, Engine::Ctmc)], short_sim());
        let rows = run_experiment(&spec);
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.status == Status::UnsupportedEngine && r.mean.is_none()));
    }

    #[test]
    fn unstable_points_are_flagged() {
        let spec = ExperimentSpec::single(
            point(0.8, 0.4),
            vec![entry(PolicySpec::query_k(1).unwrap(), Engine::All)],
            short_sim(),
        );
        let rows = run_experiment(&spec);
        assert_eq!(rows.len(), 15);
        assert!(rows.iter().all(|r| r.status == Status::Unstable));
        assert!(rows.iter().filter(|r| r.source != Source::Sim).all(|r| r.mean.is_none()));
    }

    #[test]
    fn single_replication_has_no_interval() {
        let sim = SimConfig::new(1_000.0, 0.0, 1, 3).unwrap();
        let spec = ExperimentSpec::single(point(0.3, 0.3), vec![entry(PolicySpec::Fcfs, Engine::Simulation)], sim);
        let rows = run_experiment(&spec);
        assert!(rows.iter().all(|r| r.status == Status::NotAvailable && r.mean.is_some()));
    }

    #[test]
    fn status_text_round_trips() {
        for s in [
            Status::Ok,
            Status::Unstable,
            Status::NotAvailable,
            Status::UnsupportedEngine,
            Status::Failed {
                numerical: true,
                message: "no convergence".into(),
            },
            Status::Failed {
                numerical: false,
                message: "bad".into(),
            },
        ] {
            assert_eq!(Status::parse(&s.to_string()), s);
        }
    }
}
