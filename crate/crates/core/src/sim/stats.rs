//! Aggregation across replications and Little's-law diagnostics.

use crate::model::{Metric, ModelParams, ReplicationMetrics};

/// Normal quantile for a two-sided 95% interval.
const Z_95: f64 = 1.96;

/// Mean, sample standard deviation and 95% half-width of one metric.
///
/// `std_dev` and `half_width` are `None` with fewer than two samples;
/// `mean` is `None` with none.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    pub half_width: Option<f64>,
    pub samples: usize,
}

impl MetricSummary {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self {
                mean: Some(mean),
                samples: 1,
                ..Self::default()
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        Self {
            mean: Some(mean),
            std_dev: Some(sd),
            half_width: Some(Z_95 * sd / (n as f64).sqrt()),
            samples: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub replications: usize,
    pub response_time: MetricSummary,
    pub update_system_time: MetricSummary,
    pub paoi: MetricSummary,
    pub aoi: MetricSummary,
    pub nq: MetricSummary,
    pub nu: MetricSummary,
}

impl SummaryStats {
    pub fn get(&self, metric: Metric) -> &MetricSummary {
        match metric {
            Metric::ResponseTime => &self.response_time,
            Metric::UpdateSystemTime => &self.update_system_time,
            Metric::Paoi => &self.paoi,
            Metric::Aoi => &self.aoi,
            Metric::Nq => &self.nq,
            Metric::Nu => &self.nu,
        }
    }

    /// Replication-averaged estimates packed as one metrics record.
    pub fn mean_metrics(&self) -> ReplicationMetrics {
        ReplicationMetrics {
            mean_response_time: self.response_time.mean,
            mean_update_system_time: self.update_system_time.mean,
            mean_paoi: self.paoi.mean,
            mean_aoi: self.aoi.mean,
            mean_nq: self.nq.mean,
            mean_nu: self.nu.mean,
            completed_queries: 0,
            completed_updates: 0,
            window: 0.0,
        }
    }
}

/// Per-metric summaries over replications; unavailable values are skipped.
pub fn aggregate(runs: &[ReplicationMetrics]) -> SummaryStats {
    let summary = |m: Metric| {
        let xs: Vec<f64> = runs.iter().filter_map(|r| r.get(m)).collect();
        MetricSummary::from_samples(&xs)
    };
    SummaryStats {
        replications: runs.len(),
        response_time: summary(Metric::ResponseTime),
        update_system_time: summary(Metric::UpdateSystemTime),
        paoi: summary(Metric::Paoi),
        aoi: summary(Metric::Aoi),
        nq: summary(Metric::Nq),
        nu: summary(Metric::Nu),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LittleResiduals {
    pub query: f64,
    pub update: f64,
    /// False for unstable parameters, where no steady state exists.
    pub reliable: bool,
}

fn residual(mean_n: Option<f64>, rate: f64, mean_t: Option<f64>) -> f64 {
    match (mean_n, mean_t) {
        (Some(n), Some(t)) if n > 0.0 => (n - rate * t).abs() / n,
        _ => 0.0,
    }
}

/// Relative gap between time-averaged occupancy and arrival rate times mean
/// system time, for each class.
pub fn littles_law_residual(metrics: &ReplicationMetrics, params: &ModelParams) -> LittleResiduals {
    LittleResiduals {
        query: residual(metrics.mean_nq, params.lambda_q(), metrics.mean_response_time),
        update: residual(
            metrics.mean_nu,
            params.lambda_u(),
            metrics.mean_update_system_time,
        ),
        reliable: params.rho() < 1.0,
    }
}
