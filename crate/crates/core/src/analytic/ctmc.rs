//! Truncated Markov chain of the single-threshold policies.
//!
//! A state is the scheduler state `(N_q, N_u, position)`; its successors are
//! produced by the same [`decide`] function the simulator uses. Arrivals
//! that would push a queue past its truncation bound are dropped.

use std::collections::{HashMap, VecDeque};

use super::solver::{self, Generator};
use super::AnalyticError;
use crate::model::{JobClass, ModelParams, PolicySpec, Threshold};
use crate::policy::{decide, initial_state, SchedulerState, Trigger};

/// Largest queue totals represented in the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub max_q: u32,
    pub max_u: u32,
}

impl Truncation {
    pub fn uniform(c: u32) -> Self {
        Self { max_q: c, max_u: c }
    }

    /// `max(64, 8 / (1 - rho))` in each dimension, and at least `k + 2`.
    pub fn initial(params: &ModelParams, k: u32) -> Self {
        let from_load = (8.0 / (1.0 - params.rho())).ceil();
        let c = if from_load.is_finite() && from_load < 1.0e6 {
            (from_load as u32).max(64)
        } else {
            64
        };
        Self::uniform(c.max(k + 2))
    }

    fn bound(&self, class: JobClass) -> u32 {
        match class {
            JobClass::Update => self.max_u,
            JobClass::Query => self.max_q,
        }
    }
}

/// Chain to build: parameters, a finite single-threshold policy and bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtmcSpec {
    pub params: ModelParams,
    pub policy: PolicySpec,
    pub truncation: Truncation,
}

impl CtmcSpec {
    /// Prioritized class and its finite threshold.
    fn threshold(&self) -> Result<(JobClass, u32), AnalyticError> {
        match self.policy {
            PolicySpec::QueryK(Threshold::Finite(k)) if k >= 1 => Ok((JobClass::Query, k)),
            PolicySpec::UpdateK(Threshold::Finite(k)) if k >= 1 => Ok((JobClass::Update, k)),
            other => Err(AnalyticError::UnsupportedPolicy(other)),
        }
    }
}

/// Reachable states and their transition rates.
#[derive(Debug, Clone)]
pub struct CtmcModel {
    pub spec: CtmcSpec,
    pub states: Vec<SchedulerState>,
    pub generator: Generator,
}

impl CtmcModel {
    pub fn index_of(&self, state: &SchedulerState) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    /// Successors of `state` as `(target, rate)` pairs.
    pub fn successors(&self, state: &SchedulerState) -> Vec<(SchedulerState, f64)> {
        self.index_of(state)
            .map(|i| {
                self.generator
                    .transitions(i)
                    .iter()
                    .map(|&(j, r)| (self.states[j], r))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Enumerates the states reachable from the empty system and their rates.
pub fn build_ctmc(spec: &CtmcSpec) -> Result<CtmcModel, AnalyticError> {
    let (favoured, k) = spec.threshold()?;
    let t = spec.truncation;
    if t.bound(favoured) < k + 2 || t.bound(favoured.other()) < 2 {
        return Err(AnalyticError::TruncationTooSmall {
            truncation: t,
            threshold: k,
        });
    }
    let p = &spec.params;
    let events = [
        (Trigger::ArrivalQuery, p.lambda_q()),
        (Trigger::ArrivalUpdate, p.lambda_u()),
        (Trigger::DepartureQuery, p.mu_q()),
        (Trigger::DepartureUpdate, p.mu_u()),
    ];

    let mut index: HashMap<SchedulerState, usize> = HashMap::new();
    let mut states = vec![initial_state()];
    index.insert(states[0], 0);
    let mut transitions = Vec::new();
    let mut frontier = VecDeque::from([0usize]);
    while let Some(i) = frontier.pop_front() {
        let s = states[i];
        for (trigger, rate) in events {
            let class = trigger.class();
            let enabled = if trigger.is_arrival() {
                s.len(class) < t.bound(class)
            } else {
                s.position.class() == Some(class)
            };
            if !enabled {
                continue;
            }
            let next = decide(&spec.policy, &s, trigger, None)?;
            let j = *index.entry(next).or_insert_with(|| {
                states.push(next);
                frontier.push_back(states.len() - 1);
                states.len() - 1
            });
            transitions.push((i, j, rate));
        }
    }

    // Block levels run along the longer dimension.
    let level_axis = if t.max_u >= t.max_q { JobClass::Update } else { JobClass::Query };
    let levels = states.iter().map(|s| s.len(level_axis) as usize).collect();
    Ok(CtmcModel {
        spec: *spec,
        states,
        generator: Generator::new(levels, transitions),
    })
}

/// Balance residual required of a stationary solution.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Sweep cap for iterative refinement.
pub const MAX_SWEEPS: usize = 1_000_000;
/// Target probability on the outermost two layers of each truncated dimension.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Stationary law of a truncated chain with its error estimates.
#[derive(Debug, Clone)]
pub struct CtmcSolution {
    pub spec: CtmcSpec,
    pub states: Vec<SchedulerState>,
    pub probabilities: Vec<f64>,
    /// Largest absolute entry of `pi Q`.
    pub residual: f64,
    /// Probability on the two outermost query layers.
    pub tail_mass_q: f64,
    /// Probability on the two outermost update layers.
    pub tail_mass_u: f64,
}

impl CtmcSolution {
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass_q + self.tail_mass_u
    }

    pub fn total_probability(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn probability_where(&self, pred: impl Fn(&SchedulerState) -> bool) -> f64 {
        self.states
            .iter()
            .zip(&self.probabilities)
            .filter(|(s, _)| pred(s))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn probability_of(&self, state: &SchedulerState) -> f64 {
        self.probability_where(|s| s == state)
    }

    /// `(E[N_q], E[N_u])` as direct moments of the stationary law.
    pub fn expected_queue_lengths(&self) -> (f64, f64) {
        self.states
            .iter()
            .zip(&self.probabilities)
            .fold((0.0, 0.0), |(nq, nu), (s, p)| {
                (nq + f64::from(s.n_q) * p, nu + f64::from(s.n_u) * p)
            })
    }
}

/// Solves the chain: irreducibility check, level-reduction solve, and
/// Gauss-Seidel refinement if the residual is above tolerance.
pub fn solve_stationary(model: &CtmcModel) -> Result<CtmcSolution, AnalyticError> {
    let gen = &model.generator;
    solver::check_irreducible(gen, 0)?;
    let mut pi = solver::solve_by_levels(gen)?;
    let mut residual = solver::balance_residual(gen, &pi);
    if residual > RESIDUAL_TOLERANCE {
        let (refined, _) =
            solver::refine_gauss_seidel(gen, pi, RESIDUAL_TOLERANCE, MAX_SWEEPS)?;
        pi = refined;
        residual = solver::balance_residual(gen, &pi);
    }
    let t = model.spec.truncation;
    let layer_mass = |class: JobClass, bound: u32| {
        model
            .states
            .iter()
            .zip(&pi)
            .filter(|(s, _)| s.len(class) + 1 >= bound)
            .map(|(_, p)| p)
            .sum::<f64>()
    };
    Ok(CtmcSolution {
        spec: model.spec,
        tail_mass_q: layer_mass(JobClass::Query, t.max_q),
        tail_mass_u: layer_mass(JobClass::Update, t.max_u),
        states: model.states.clone(),
        probabilities: pi,
        residual,
    })
}

/// Largest bound the adaptive truncation will try in either dimension.
const MAX_BOUND: u32 = 1 << 13;

/// Builds and solves the chain for `policy`. With `truncation = None` the
/// bounds start at [`Truncation::initial`] and each dimension whose outer
/// layers carry too much mass is doubled until the total tail mass is below
/// [`TAIL_TOLERANCE`].
pub fn solve_policy(
    params: &ModelParams,
    policy: PolicySpec,
    truncation: Option<Truncation>,
) -> Result<CtmcSolution, AnalyticError> {
    params.stability_guard()?;
    let k = match policy {
        PolicySpec::QueryK(Threshold::Finite(k)) | PolicySpec::UpdateK(Threshold::Finite(k)) => k,
        other => return Err(AnalyticError::UnsupportedPolicy(other)),
    };
    if let Some(t) = truncation {
        let spec = CtmcSpec {
            params: *params,
            policy,
            truncation: t,
        };
        return solve_stationary(&build_ctmc(&spec)?);
    }
    let mut t = Truncation::initial(params, k);
    loop {
        let spec = CtmcSpec {
            params: *params,
            policy,
            truncation: t,
        };
        let sol = solve_stationary(&build_ctmc(&spec)?)?;
        if sol.tail_mass() < TAIL_TOLERANCE {
            return Ok(sol);
        }
        let half = TAIL_TOLERANCE / 2.0;
        if sol.tail_mass_q >= half {
            t.max_q *= 2;
        }
        if sol.tail_mass_u >= half {
            t.max_u *= 2;
        }
        if sol.tail_mass_q < half && sol.tail_mass_u < half {
            t.max_q *= 2;
            t.max_u *= 2;
        }
        if t.max_q > MAX_BOUND || t.max_u > MAX_BOUND {
            return Err(AnalyticError::TailTooHeavy {
                tail_mass: sol.tail_mass(),
                truncation: sol.spec.truncation,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ServerPosition::*;

    fn st(n_q: u32, n_u: u32, position: crate::policy::ServerPosition) -> SchedulerState {
        SchedulerState {
            n_q,
            n_u,
            position,
            emptying: position == ServingQuery,
        }
    }

    fn query_spec(k: u32, c: u32, lu: f64, lq: f64) -> CtmcSpec {
        CtmcSpec {
            params: ModelParams::new(lu, 1.0, lq, 1.0).unwrap(),
            policy: PolicySpec::query_k(k).unwrap(),
            truncation: Truncation::uniform(c),
        }
    }

    #[test]
    fn query2_transitions_from_serving_update() {
        let model = build_ctmc(&query_spec(2, 8, 0.3, 0.2)).unwrap();
        let mut succ = model.successors(&st(1, 2, ServingUpdate));
        succ.sort_by_key(|a| a.0);
        let mut expected = vec![
            (st(2, 2, ServingQuery), 0.2),
            (st(1, 3, ServingUpdate), 0.3),
            (st(1, 1, ServingUpdate), 1.0),
        ];
        expected.sort_by_key(|a| a.0);
        assert_eq!(succ, expected);

        let succ = model.successors(&st(1, 1, ServingUpdate));
        assert!(succ.contains(&(st(1, 0, ServingQuery), 1.0)));

        let succ = model.successors(&initial_state());
        assert!(succ.contains(&(st(0, 1, ServingUpdate), 0.3)));
        assert!(succ.contains(&(st(1, 0, ServingQuery), 0.2)));
    }

    #[test]
    fn boundary_drops_arrivals() {
        let model = build_ctmc(&query_spec(2, 4, 0.3, 0.2)).unwrap();
        let succ = model.successors(&st(1, 4, ServingUpdate));
        assert!(succ.iter().all(|(s, _)| s.n_u <= 4));
        assert_eq!(succ.len(), 2);
        assert!(model.states.iter().all(|s| s.n_q <= 4 && s.n_u <= 4));
    }

    #[test]
    fn unreachable_serving_update_states_are_absent() {
        let model = build_ctmc(&query_spec(3, 10, 0.4, 0.3)).unwrap();
        assert!(!model
            .states
            .iter()
            .any(|s| s.position == ServingUpdate && s.n_q >= 3));
    }

    #[test]
    fn truncation_too_small() {
        assert!(matches!(
            build_ctmc(&query_spec(3, 4, 0.4, 0.3)),
            Err(AnalyticError::TruncationTooSmall { threshold: 3, .. })
        ));
        assert!(build_ctmc(&query_spec(3, 5, 0.4, 0.3)).is_ok());
    }

    #[test]
    fn unsupported_policies() {
        let mut spec = query_spec(3, 10, 0.4, 0.3);
        spec.policy = PolicySpec::Fcfs;
        assert!(matches!(build_ctmc(&spec), Err(AnalyticError::UnsupportedPolicy(_))));
        spec.policy = PolicySpec::QueryK(Threshold::Unbounded);
        assert!(matches!(build_ctmc(&spec), Err(AnalyticError::UnsupportedPolicy(_))));
    }

    #[test]
    fn solution_is_a_distribution() {
        let sol = solve_stationary(&build_ctmc(&query_spec(3, 40, 0.3, 0.3)).unwrap()).unwrap();
        assert!(sol.probabilities.iter().all(|&p| p >= 0.0));
        assert!((sol.total_probability() - 1.0).abs() < 1e-12);
        assert!(sol.residual <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn concentrated_distribution_moments() {
        let model = build_ctmc(&query_spec(3, 10, 0.3, 0.3)).unwrap();
        let target = st(2, 3, ServingUpdate);
        let probabilities = model
            .states
            .iter()
            .map(|s| if *s == target { 1.0 } else { 0.0 })
            .collect();
        let sol = CtmcSolution {
            spec: model.spec,
            states: model.states.clone(),
            probabilities,
            residual: 0.0,
            tail_mass_q: 0.0,
            tail_mass_u: 0.0,
        };
        assert_eq!(sol.expected_queue_lengths(), (2.0, 3.0));
    }

    #[test]
    fn adaptive_truncation_reaches_tail_target() {
        let params = ModelParams::new(0.6, 1.0, 0.25, 1.0).unwrap();
        let sol = solve_policy(&params, PolicySpec::query_k(2).unwrap(), None).unwrap();
        assert!(sol.tail_mass() < TAIL_TOLERANCE);
        assert!(sol.spec.truncation.max_u >= 64);
    }

    #[test]
    fn unstable_is_rejected() {
        let params = ModelParams::new(0.6, 1.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            solve_policy(&params, PolicySpec::query_k(2).unwrap(), None),
            Err(AnalyticError::Model(crate::model::ModelError::Unstable(_)))
        ));
    }
}
