//! Stationary distributions of finite continuous-time Markov chains.
//!
//! Two independent routes are provided:
//!
//! * [`solve_by_levels`] treats the generator as block tridiagonal over a
//!   caller-supplied level assignment and eliminates levels from the top
//!   down (linear level reduction). It is exact up to rounding and is the
//!   default route.
//! * [`solve_gauss_seidel`] iterates the global balance equations in place,
//!   re-normalizing after each sweep. It needs no structure and serves as a
//!   cross-check on small chains.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::AnalyticError;

/// Sparse generator: off-diagonal rates per source state and a level per
/// state. Transitions may only connect equal or adjacent levels.
#[derive(Debug, Clone)]
pub struct Generator {
    out: Vec<Vec<(usize, f64)>>,
    level: Vec<usize>,
}

impl Generator {
    /// Builds a generator from `(from, to, rate)` triples. Self-loops and
    /// zero rates are dropped; parallel transitions are merged.
    pub fn new(
        levels: Vec<usize>,
        transitions: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let n = levels.len();
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (from, to, rate) in transitions {
            assert!(from < n && to < n, "transition {from}->{to} outside {n} states");
            if from == to || rate == 0.0 {
                continue;
            }
            match out[from].iter_mut().find(|(t, _)| *t == to) {
                Some((_, r)) => *r += rate,
                None => out[from].push((to, rate)),
            }
        }
        Self { out, level: levels }
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn transitions(&self, from: usize) -> &[(usize, f64)] {
        &self.out[from]
    }

    pub fn level(&self, state: usize) -> usize {
        self.level[state]
    }

    fn exit_rate(&self, state: usize) -> f64 {
        self.out[state].iter().map(|&(_, r)| r).sum()
    }

    fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let mut inc = vec![Vec::new(); self.len()];
        for (from, row) in self.out.iter().enumerate() {
            for &(to, rate) in row {
                inc[to].push((from, rate));
            }
        }
        inc
    }
}

/// Largest absolute entry of `pi * Q`.
pub fn balance_residual(gen: &Generator, pi: &[f64]) -> f64 {
    let mut flow = vec![0.0; gen.len()];
    for (i, row) in gen.out.iter().enumerate() {
        let mut exit = 0.0;
        for &(j, r) in row {
            flow[j] += pi[i] * r;
            exit += r;
        }
        flow[i] -= pi[i] * exit;
    }
    flow.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fails with [`AnalyticError::Reducible`] unless every state reaches
/// `root` and is reachable from it.
pub fn check_irreducible(gen: &Generator, root: usize) -> Result<(), AnalyticError> {
    let n = gen.len();
    let reach = |adj: &dyn Fn(usize) -> Vec<usize>| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(s) = queue.pop_front() {
            for t in adj(s) {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen.iter().filter(|&&b| b).count()
    };
    let forward = reach(&|s| gen.out[s].iter().map(|&(t, _)| t).collect());
    let incoming = gen.incoming();
    let backward = reach(&|s| incoming[s].iter().map(|&(f, _)| f).collect());
    if forward == n && backward == n {
        Ok(())
    } else {
        Err(AnalyticError::Reducible {
            states: n,
            reachable: forward.min(backward),
        })
    }
}

/// Direct solve by top-down elimination of levels.
///
/// With `pi_l` the probabilities on level `l`, the balance equations read
/// `pi_{l-1} U_{l-1} + pi_l A_l + pi_{l+1} D_{l+1} = 0`. Starting from the
/// top level, `pi_l = pi_{l-1} R_l` with `R_l = -U_{l-1} M_l^{-1}` and
/// `M_{l-1} = A_{l-1} + R_l D_l`; level 0 is then solved against the
/// normalization condition.
pub fn solve_by_levels(gen: &Generator) -> Result<Vec<f64>, AnalyticError> {
    let n = gen.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let top = *gen.level.iter().max().unwrap();
    // Position of every state inside its level block.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); top + 1];
    let mut slot = vec![0usize; n];
    for (s, &l) in gen.level.iter().enumerate() {
        slot[s] = members[l].len();
        members[l].push(s);
    }
    if let Some(l) = members.iter().position(|m| m.is_empty()) {
        return Err(AnalyticError::Solver(format!("level {l} holds no states")));
    }

    // Dense blocks: `diag[l]` = A_l, `up[l]` = U_l (l -> l+1), `down[l]` = D_l (l -> l-1).
    let dims: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut diag: Vec<DMatrix<f64>> = dims.iter().map(|&p| DMatrix::zeros(p, p)).collect();
    let mut up: Vec<DMatrix<f64>> = (0..=top)
        .map(|l| DMatrix::zeros(dims[l], if l < top { dims[l + 1] } else { 0 }))
        .collect();
    let mut down: Vec<DMatrix<f64>> = (0..=top)
        .map(|l| DMatrix::zeros(dims[l], if l > 0 { dims[l - 1] } else { 0 }))
        .collect();
    for s in 0..n {
        let l = gen.level[s];
        let i = slot[s];
        for &(t, r) in &gen.out[s] {
            let lt = gen.level[t];
            let j = slot[t];
            if lt == l {
                diag[l][(i, j)] += r;
            } else if lt == l + 1 {
                up[l][(i, j)] += r;
            } else if lt + 1 == l {
                down[l][(i, j)] += r;
            } else {
                return Err(AnalyticError::Solver(format!(
                    "transition {s}->{t} skips levels {l}->{lt}"
                )));
            }
        }
        diag[l][(i, i)] -= gen.exit_rate(s);
    }

    // rs[l] = R_l for l >= 1.
    let mut rs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); top + 1];
    let mut m = diag[top].clone();
    for l in (1..=top).rev() {
        // R_l^T = -(M_l^T)^{-1} U_{l-1}^T
        let rhs = -up[l - 1].transpose();
        let rt = m
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| AnalyticError::Solver(format!("singular block at level {l}")))?;
        let r = rt.transpose();
        m = &diag[l - 1] + &r * &down[l];
        rs[l] = r;
    }

    // pi_0 M_0 = 0 with sum(pi_0) free: replace one equation by pi_0 * 1 = 1.
    let p0 = dims[0];
    let mut sys = m.transpose();
    for j in 0..p0 {
        sys[(p0 - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(p0);
    rhs[p0 - 1] = 1.0;
    let pi0 = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AnalyticError::Solver("singular boundary block".into()))?;

    let mut blocks: Vec<DVector<f64>> = Vec::with_capacity(top + 1);
    blocks.push(pi0);
    for l in 1..=top {
        let next = rs[l].tr_mul(&blocks[l - 1]);
        blocks.push(next);
    }

    let mut pi = vec![0.0; n];
    for (l, block) in blocks.iter().enumerate() {
        for (i, &s) in members[l].iter().enumerate() {
            // Round-off can leave values a few ulps below zero.
            pi[s] = block[i].max(0.0);
        }
    }
    let total: f64 = pi.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(AnalyticError::Solver("degenerate normalization".into()));
    }
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

/// Gauss-Seidel iteration on `pi Q = 0` from the uniform distribution,
/// normalizing after every sweep, until the balance residual drops to
/// `tolerance`. Returns the solution and the number of sweeps used.
pub fn solve_gauss_seidel(
    gen: &Generator,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, usize), AnalyticError> {
    let n = gen.len();
    refine_gauss_seidel(gen, vec![1.0 / n as f64; n], tolerance, max_sweeps)
}

/// Gauss-Seidel sweeps starting from `pi`.
pub fn refine_gauss_seidel(
    gen: &Generator,
    mut pi: Vec<f64>,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, usize), AnalyticError> {
    let n = gen.len();
    let incoming = gen.incoming();
    let exit: Vec<f64> = (0..n).map(|s| gen.exit_rate(s)).collect();
    for sweep in 1..=max_sweeps {
        for j in 0..n {
            if exit[j] > 0.0 {
                pi[j] = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum::<f64>() / exit[j];
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        if sweep % 16 == 0 || sweep == max_sweeps {
            let res = balance_residual(gen, &pi);
            if res <= tolerance {
                return Ok((pi, sweep));
            }
        }
    }
    Err(AnalyticError::NoConvergence {
        sweeps: max_sweeps,
        residual: balance_residual(gen, &pi),
    })
}
