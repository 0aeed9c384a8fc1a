//! Closed-form mean response time and peak age for FCFS, Query-1 and Update-1.

use super::{AnalyticError, ClosedFormResult};
use crate::model::{JobClass, ModelError, ModelParams, PolicySpec, RateKind};

/// Peak age from the mean update system time: mean inter-arrival plus
/// mean time in system.
pub fn paoi_from_update_system_time(params: &ModelParams, expected_t_u: f64) -> f64 {
    1.0 / params.lambda_u() + expected_t_u
}

/// Right-hand side of the work conservation identity,
/// `E[N_q]/mu_q + E[N_u]/mu_u = (lambda_q/mu_q^2 + lambda_u/mu_u^2) / (1 - rho)`.
pub fn conservation_rhs(params: &ModelParams) -> Result<f64, AnalyticError> {
    params.stability_guard()?;
    let work = params.lambda_q() / params.mu_q().powi(2) + params.lambda_u() / params.mu_u().powi(2);
    Ok(work / (1.0 - params.rho()))
}

pub fn fcfs_metrics(params: &ModelParams) -> Result<ClosedFormResult, AnalyticError> {
    params.stability_guard()?;
    let (rho_u, rho_q) = (params.rho_u(), params.rho_q());
    let slack = 1.0 - rho_u - rho_q;
    let t_q = (rho_u / params.mu_u() + (1.0 - rho_u) / params.mu_q()) / slack;
    let t_u = (rho_q / params.mu_q() + (1.0 - rho_q) / params.mu_u()) / slack;
    Ok(ClosedFormResult::new(PolicySpec::Fcfs, *params, t_q, t_u))
}

/// Mean system time of the class at 1-based priority `position` in a
/// preemptive-resume priority queue, highest priority first in `order`.
/// Service is exponential, so `E[S^2] / (2 E[S]) = 1/mu`.
pub fn priority_system_time(
    params: &ModelParams,
    order: [JobClass; 2],
    position: usize,
) -> Result<f64, AnalyticError> {
    assert!((1..=2).contains(&position), "two classes only");
    let load = |c: JobClass| params.rate(c, RateKind::Arrival) / params.rate(c, RateKind::Service);
    let higher: f64 = order[..position - 1].iter().map(|&c| load(c)).sum();
    let through: f64 = higher + load(order[position - 1]);
    if through >= 1.0 {
        return Err(ModelError::Unstable(through).into());
    }
    let residual: f64 = order[..position]
        .iter()
        .map(|&c| load(c) / params.rate(c, RateKind::Service))
        .sum();
    let mean_service = 1.0 / params.rate(order[position - 1], RateKind::Service);
    Ok(mean_service / (1.0 - higher) + residual / ((1.0 - higher) * (1.0 - through)))
}

/// Query-1: queries preempt updates.
pub fn query1_metrics(params: &ModelParams) -> Result<ClosedFormResult, AnalyticError> {
    params.stability_guard()?;
    let order = [JobClass::Query, JobClass::Update];
    let t_q = priority_system_time(params, order, 1)?;
    let t_u = priority_system_time(params, order, 2)?;
    Ok(ClosedFormResult::new(
        PolicySpec::QueryK(crate::model::Threshold::Finite(1)),
        *params,
        t_q,
        t_u,
    ))
}

/// Update-1: updates preempt queries.
pub fn update1_metrics(params: &ModelParams) -> Result<ClosedFormResult, AnalyticError> {
    params.stability_guard()?;
    let order = [JobClass::Update, JobClass::Query];
    let t_u = priority_system_time(params, order, 1)?;
    let t_q = priority_system_time(params, order, 2)?;
    Ok(ClosedFormResult::new(
        PolicySpec::UpdateK(crate::model::Threshold::Finite(1)),
        *params,
        t_q,
        t_u,
    ))
}
