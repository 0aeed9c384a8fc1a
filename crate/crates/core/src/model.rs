//! Parametrization and record types shared by the simulator, the analytic
//! solvers and the command-line front end.

use std::fmt;

use thiserror::Error;

/// Errors raised while constructing model values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("rate `{name}` must be strictly positive, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("rate `{name}` must be finite, got {value}")]
    NonFiniteRate { name: &'static str, value: f64 },
    #[error("system is unstable: total load rho = {0} >= 1")]
    Unstable(f64),
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("joint policy needs at least one finite threshold")]
    NoFiniteThreshold,
}

/// Arrival and service rates of the two job classes.
///
/// Loads are derived on demand from the four rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    lambda_u: f64,
    mu_u: f64,
    lambda_q: f64,
    mu_q: f64,
}

fn check_rate(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NonFiniteRate { name, value });
    }
    if value <= 0.0 {
        return Err(ModelError::NonPositiveRate { name, value });
    }
    Ok(value)
}

impl ModelParams {
    /// Validates the four rates. Argument order is update arrival, update
    /// service, query arrival, query service.
    pub fn new(lambda_u: f64, mu_u: f64, lambda_q: f64, mu_q: f64) -> Result<Self, ModelError> {
        // NaN fails `is_finite`, so it reports as non-finite rather than non-positive.
        Ok(Self {
            lambda_u: check_rate("lambda_u", lambda_u)?,
            mu_u: check_rate("mu_u", mu_u)?,
            lambda_q: check_rate("lambda_q", lambda_q)?,
            mu_q: check_rate("mu_q", mu_q)?,
        })
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn mu_u(&self) -> f64 {
        self.mu_u
    }

    pub fn lambda_q(&self) -> f64 {
        self.lambda_q
    }

    pub fn mu_q(&self) -> f64 {
        self.mu_q
    }

    pub fn rate(&self, class: JobClass, kind: RateKind) -> f64 {
        match (class, kind) {
            (JobClass::Update, RateKind::Arrival) => self.lambda_u,
            (JobClass::Update, RateKind::Service) => self.mu_u,
            (JobClass::Query, RateKind::Arrival) => self.lambda_q,
            (JobClass::Query, RateKind::Service) => self.mu_q,
        }
    }

    pub fn rho_u(&self) -> f64 {
        self.lambda_u / self.mu_u
    }

    pub fn rho_q(&self) -> f64 {
        self.lambda_q / self.mu_q
    }

    pub fn rho(&self) -> f64 {
        self.rho_u() + self.rho_q()
    }

    /// Parameters with the roles of updates and queries exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            lambda_u: self.lambda_q,
            mu_u: self.mu_q,
            lambda_q: self.lambda_u,
            mu_q: self.mu_u,
        }
    }

    /// Fails with [`ModelError::Unstable`] unless the total load is below one.
    pub fn stability_guard(&self) -> Result<(), ModelError> {
        let rho = self.rho();
        if rho < 1.0 {
            Ok(())
        } else {
            Err(ModelError::Unstable(rho))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Arrival,
    Service,
}

/// A switching threshold: a positive count, or no threshold at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Threshold {
    Finite(u32),
    Unbounded,
}

impl Threshold {
    pub fn finite(k: u32) -> Result<Self, ModelError> {
        if k == 0 {
            Err(ModelError::ZeroThreshold)
        } else {
            Ok(Threshold::Finite(k))
        }
    }

    /// True when a queue holding `len` jobs has reached this threshold.
    pub fn is_reached(self, len: u32) -> bool {
        match self {
            Threshold::Finite(k) => len >= k,
            Threshold::Unbounded => false,
        }
    }

    pub fn as_finite(self) -> Option<u32> {
        match self {
            Threshold::Finite(k) => Some(k),
            Threshold::Unbounded => None,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(k) => write!(f, "{k}"),
            Threshold::Unbounded => f.write_str("inf"),
        }
    }
}

/// Scheduling policy together with its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicySpec {
    Fcfs,
    QueryK(Threshold),
    UpdateK(Threshold),
    /// `update` is the update-queue threshold M, `query` the query-queue threshold N.
    JointMN { update: Threshold, query: Threshold },
}

impl PolicySpec {
    pub fn query_k(k: u32) -> Result<Self, ModelError> {
        Ok(PolicySpec::QueryK(Threshold::finite(k)?))
    }

    pub fn update_k(k: u32) -> Result<Self, ModelError> {
        Ok(PolicySpec::UpdateK(Threshold::finite(k)?))
    }

    pub fn joint(update: Threshold, query: Threshold) -> Result<Self, ModelError> {
        let spec = PolicySpec::JointMN { update, query };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn check(t: Threshold) -> Result<(), ModelError> {
            match t {
                Threshold::Finite(0) => Err(ModelError::ZeroThreshold),
                _ => Ok(()),
            }
        }
        match *self {
            PolicySpec::Fcfs => Ok(()),
            PolicySpec::QueryK(k) | PolicySpec::UpdateK(k) => check(k),
            PolicySpec::JointMN { update, query } => {
                if update == Threshold::Unbounded && query == Threshold::Unbounded {
                    return Err(ModelError::NoFiniteThreshold);
                }
                check(update)?;
                check(query)
            }
        }
    }

    /// Short policy family name used in tables: `fcfs`, `query-k`, `update-k`, `joint`.
    pub fn family(&self) -> &'static str {
        match self {
            PolicySpec::Fcfs => "fcfs",
            PolicySpec::QueryK(_) => "query-k",
            PolicySpec::UpdateK(_) => "update-k",
            PolicySpec::JointMN { .. } => "joint",
        }
    }

    /// The same rule set with the two job classes exchanged.
    pub fn mirrored(&self) -> Self {
        match *self {
            PolicySpec::Fcfs => PolicySpec::Fcfs,
            PolicySpec::QueryK(k) => PolicySpec::UpdateK(k),
            PolicySpec::UpdateK(k) => PolicySpec::QueryK(k),
            PolicySpec::JointMN { update, query } => PolicySpec::JointMN {
                update: query,
                query: update,
            },
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Fcfs => f.write_str("FCFS"),
            PolicySpec::QueryK(k) => write!(f, "Query-{k}"),
            PolicySpec::UpdateK(k) => write!(f, "Update-{k}"),
            PolicySpec::JointMN { update, query } => write!(f, "Joint-({update},{query})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JobClass {
    Update,
    Query,
}

impl JobClass {
    pub const ALL: [JobClass; 2] = [JobClass::Update, JobClass::Query];

    pub fn other(self) -> Self {
        match self {
            JobClass::Update => JobClass::Query,
            JobClass::Query => JobClass::Update,
        }
    }
}

/// One job's life in the system, in time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobRecord {
    pub class: JobClass,
    pub arrival_time: f64,
    pub service_requirement: f64,
    pub completion_time: Option<f64>,
}

impl JobRecord {
    /// Time spent in the system, once completed.
    pub fn system_time(&self) -> Option<f64> {
        self.completion_time.map(|c| c - self.arrival_time)
    }
}

/// Estimates from one simulation run over its measurement window.
///
/// `None` marks a metric with no samples (reported as "n/a").
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReplicationMetrics {
    pub mean_response_time: Option<f64>,
    pub mean_update_system_time: Option<f64>,
    pub mean_paoi: Option<f64>,
    pub mean_aoi: Option<f64>,
    pub mean_nq: Option<f64>,
    pub mean_nu: Option<f64>,
    pub completed_queries: u64,
    pub completed_updates: u64,
    /// Length of the measurement window (horizon minus warmup).
    pub window: f64,
}

impl ReplicationMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::ResponseTime => self.mean_response_time,
            Metric::UpdateSystemTime => self.mean_update_system_time,
            Metric::Paoi => self.mean_paoi,
            Metric::Aoi => self.mean_aoi,
            Metric::Nq => self.mean_nq,
            Metric::Nu => self.mean_nu,
        }
    }
}

/// Quantities estimated per run and reported per operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    ResponseTime,
    Paoi,
    Aoi,
    Nq,
    Nu,
    UpdateSystemTime,
}

impl Metric {
    /// Metrics that appear in result tables, in table order.
    pub const REPORTED: [Metric; 5] = [
        Metric::ResponseTime,
        Metric::Paoi,
        Metric::Aoi,
        Metric::Nq,
        Metric::Nu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ResponseTime => "response_time",
            Metric::Paoi => "paoi",
            Metric::Aoi => "aoi",
            Metric::Nq => "nq",
            Metric::Nu => "nu",
            Metric::UpdateSystemTime => "update_system_time",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Metric::ResponseTime,
            Metric::Paoi,
            Metric::Aoi,
            Metric::Nq,
            Metric::Nu,
            Metric::UpdateSystemTime,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }
}
