//! Discrete-event simulation of the shared server.
//!
//! Each replication draws from four independent streams (update arrivals,
//! query arrivals, update services, query services) derived from the base
//! seed and the replication index. Running a different policy with the same
//! configuration replays the same arrivals and service requirements.

mod aoi;
mod calendar;
mod clock;
mod engine;
mod rng;
mod stats;

use rayon::prelude::*;
use thiserror::Error;

pub use aoi::AoiTracker;
pub use calendar::{Event, EventCalendar};
pub use clock::{SimTime, TICKS_PER_UNIT};
pub use engine::{ReplicationTrace, UpdateSample, WorkLedger};
pub use rng::{exponential_from_uniform, sample_exponential, stream, StreamKind};
pub use stats::{aggregate, littles_law_residual, LittleResiduals, MetricSummary, SummaryStats};

use crate::model::{ModelError, ModelParams, PolicySpec, ReplicationMetrics};
use crate::policy::PolicyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error("replication index {index} out of range for {replications} replications")]
    ReplicationOutOfRange { index: u32, replications: u32 },
    #[error(
        "update generated at {generation_time} delivered at {now} after a fresher one ({freshest})"
    )]
    OutOfOrderDeparture {
        generation_time: f64,
        freshest: f64,
        now: f64,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Run length, warmup and replication count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub warmup: f64,
    pub replications: u32,
    pub base_seed: u64,
}

impl SimConfig {
    pub const DEFAULT_HORIZON: f64 = 20_000.0;
    pub const DEFAULT_REPLICATIONS: u32 = 10;

    /// A window of zero length (`horizon == warmup`) is accepted; every
    /// windowed metric of such a run is reported as unavailable.
    pub fn new(horizon: f64, warmup: f64, replications: u32, base_seed: u64) -> Result<Self, SimError> {
        if !(horizon.is_finite() && warmup.is_finite()) {
            return Err(SimError::InvalidConfig("horizon and warmup must be finite"));
        }
        if warmup < 0.0 {
            return Err(SimError::InvalidConfig("warmup must be nonnegative"));
        }
        if horizon < warmup {
            return Err(SimError::InvalidConfig("horizon must not precede warmup"));
        }
        if horizon > 1.0e6 {
            return Err(SimError::InvalidConfig("horizon above 1e6 time units"));
        }
        if replications == 0 {
            return Err(SimError::InvalidConfig("at least one replication is required"));
        }
        Ok(Self {
            horizon,
            warmup,
            replications,
            base_seed,
        })
    }

    /// 20,000 time units, no warmup, 10 replications.
    pub fn standard(base_seed: u64) -> Self {
        Self {
            horizon: Self::DEFAULT_HORIZON,
            warmup: 0.0,
            replications: Self::DEFAULT_REPLICATIONS,
            base_seed,
        }
    }
}

/// Simulates replication `rep_index` and returns its metrics.
pub fn run_replication(
    params: &ModelParams,
    policy: &PolicySpec,
    config: &SimConfig,
    rep_index: u32,
) -> Result<ReplicationMetrics, SimError> {
    engine::simulate(params, policy, config, rep_index, false).map(|t| t.metrics)
}

/// Like [`run_replication`] but keeps every completed job and update sample.
pub fn run_replication_traced(
    params: &ModelParams,
    policy: &PolicySpec,
    config: &SimConfig,
    rep_index: u32,
) -> Result<ReplicationTrace, SimError> {
    engine::simulate(params, policy, config, rep_index, true)
}

/// All replications of `config`, run in parallel, in replication order.
pub fn run_replications(
    params: &ModelParams,
    policy: &PolicySpec,
    config: &SimConfig,
) -> Result<Vec<ReplicationMetrics>, SimError> {
    (0..config.replications)
        .into_par_iter()
        .map(|i| run_replication(params, policy, config, i))
        .collect()
}

/// Runs all replications and aggregates them.
pub fn simulate_point(
    params: &ModelParams,
    policy: &PolicySpec,
    config: &SimConfig,
) -> Result<SummaryStats, SimError> {
    Ok(aggregate(&run_replications(params, policy, config)?))
}
