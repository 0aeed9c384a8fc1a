//! Closed forms and truncated-chain solutions for mean response time and
//! mean peak age.

mod closed_form;
mod ctmc;
pub mod solver;

use thiserror::Error;

pub use closed_form::{
    conservation_rhs, fcfs_metrics, paoi_from_update_system_time, priority_system_time,
    query1_metrics, update1_metrics,
};
pub use ctmc::{
    build_ctmc, solve_policy, solve_stationary, CtmcModel, CtmcSolution, CtmcSpec, Truncation,
    MAX_SWEEPS, RESIDUAL_TOLERANCE, TAIL_TOLERANCE,
};

use crate::model::{ModelError, ModelParams, PolicySpec, Threshold};
use crate::policy::PolicyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no analytic treatment for policy {0}")]
    UnsupportedPolicy(PolicySpec),
    #[error("truncation {truncation:?} too small for threshold {threshold}")]
    TruncationTooSmall { truncation: Truncation, threshold: u32 },
    #[error("tail mass {tail_mass:e} still too large at truncation {truncation:?}")]
    TailTooHeavy { tail_mass: f64, truncation: Truncation },
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("chain is reducible: {reachable} of {states} states mutually reachable")]
    Reducible { states: usize, reachable: usize },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl AnalyticError {
    /// True for failures of the numerical method rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            AnalyticError::NoConvergence { .. }
                | AnalyticError::TailTooHeavy { .. }
                | AnalyticError::Solver(_)
                | AnalyticError::Reducible { .. }
        )
    }
}

/// Error estimates attached to chain-based results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainDiagnostics {
    pub truncation: Truncation,
    pub states: usize,
    pub residual: f64,
    pub tail_mass: f64,
    /// Mean length of the non-threshold queue read directly off the chain,
    /// to compare with the value implied by work conservation.
    pub direct_moment: f64,
    /// Relative gap between the direct moment and the conservation value.
    pub conservation_gap: f64,
}

impl ChainDiagnostics {
    /// Whether the two routes to the second queue length agree to within
    /// the solution's own error budget.
    pub fn is_consistent(&self) -> bool {
        self.conservation_gap <= 1e-6_f64.max(10.0 * (self.tail_mass + self.residual))
    }
}

/// Mean response time, update system time and peak age for one policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormResult {
    pub policy: PolicySpec,
    pub params: ModelParams,
    pub expected_response_time: f64,
    pub expected_update_system_time: f64,
    pub expected_paoi: f64,
    /// `lambda_q * E[T_q]`.
    pub expected_nq: f64,
    /// `lambda_u * E[T_u]`.
    pub expected_nu: f64,
    pub chain: Option<ChainDiagnostics>,
}

impl ClosedFormResult {
    fn new(policy: PolicySpec, params: ModelParams, t_q: f64, t_u: f64) -> Self {
        Self {
            policy,
            params,
            expected_response_time: t_q,
            expected_update_system_time: t_u,
            expected_paoi: paoi_from_update_system_time(&params, t_u),
            expected_nq: params.lambda_q() * t_q,
            expected_nu: params.lambda_u() * t_u,
            chain: None,
        }
    }
}

fn diagnostics(sol: &CtmcSolution, direct: f64, implied: f64) -> ChainDiagnostics {
    ChainDiagnostics {
        truncation: sol.spec.truncation,
        states: sol.states.len(),
        residual: sol.residual,
        tail_mass: sol.tail_mass(),
        direct_moment: direct,
        conservation_gap: if direct > 0.0 {
            (implied - direct).abs() / direct
        } else {
            implied.abs()
        },
    }
}

/// Query-k through the truncated chain: `E[T_q] = E[N_q]/lambda_q`, with
/// `E[N_u]` from work conservation and peak age `1/lambda_u + E[N_u]/lambda_u`.
/// `k = 1` is accepted and reproduces the priority-queue closed form.
pub fn query_k_metrics(
    params: &ModelParams,
    k: u32,
    truncation: Option<Truncation>,
) -> Result<ClosedFormResult, AnalyticError> {
    let policy = PolicySpec::query_k(k)?;
    let sol = solve_policy(params, policy, truncation)?;
    let (nq, nu_direct) = sol.expected_queue_lengths();
    let rhs = conservation_rhs(params)?;
    let nu = params.mu_u() * (rhs - nq / params.mu_q());
    let t_q = nq / params.lambda_q();
    let t_u = nu / params.lambda_u();
    let mut result = ClosedFormResult::new(policy, *params, t_q, t_u);
    result.chain = Some(diagnostics(&sol, nu_direct, nu));
    Ok(result)
}

/// Update-k through the truncated chain: peak age `1/lambda_u + E[N_u]/lambda_u`
/// and `E[T_q] = (mu_q/lambda_q) (rhs - E[N_u]/mu_u)` from work conservation.
pub fn update_k_metrics(
    params: &ModelParams,
    k: u32,
    truncation: Option<Truncation>,
) -> Result<ClosedFormResult, AnalyticError> {
    let policy = PolicySpec::update_k(k)?;
    let sol = solve_policy(params, policy, truncation)?;
    let (nq_direct, nu) = sol.expected_queue_lengths();
    let rhs = conservation_rhs(params)?;
    let nq = params.mu_q() * (rhs - nu / params.mu_u());
    let t_q = nq / params.lambda_q();
    let t_u = nu / params.lambda_u();
    let mut result = ClosedFormResult::new(policy, *params, t_q, t_u);
    result.chain = Some(diagnostics(&sol, nq_direct, nq));
    Ok(result)
}

/// Closed form where one exists (FCFS, Query-1, Update-1).
pub fn closed_form(params: &ModelParams, policy: &PolicySpec) -> Result<ClosedFormResult, AnalyticError> {
    match policy {
        PolicySpec::Fcfs => fcfs_metrics(params),
        PolicySpec::QueryK(Threshold::Finite(1)) => query1_metrics(params),
        PolicySpec::UpdateK(Threshold::Finite(1)) => update1_metrics(params),
        other => Err(AnalyticError::UnsupportedPolicy(*other)),
    }
}

/// Chain-based result for finite single-threshold policies.
pub fn chain_metrics(
    params: &ModelParams,
    policy: &PolicySpec,
    truncation: Option<Truncation>,
) -> Result<ClosedFormResult, AnalyticError> {
    match *policy {
        PolicySpec::QueryK(Threshold::Finite(k)) => query_k_metrics(params, k, truncation),
        PolicySpec::UpdateK(Threshold::Finite(k)) => update_k_metrics(params, k, truncation),
        other => Err(AnalyticError::UnsupportedPolicy(other)),
    }
}
