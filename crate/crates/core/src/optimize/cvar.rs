//! Sensitivity-based policy iteration for long-run CVaR and mean-CVaR.
//!
//! Each round evaluates the incumbent `d` (stationary law, VaR, CVaR, mean),
//! computes potentials of the pseudo cost `f_β(VaR^d, ·, ·)` under `d`, and
//! switches every state to an action minimizing
//! `f_β(VaR^d, i, a) + Σ_j p(j | i, a) g(j)`. The loop stops when no state
//! changes; the fixed point satisfies the Bellman local optimality equations.

use serde::{Deserialize, Serialize};

use crate::chain::Potentials;
use crate::error::{Error, Result};
use crate::mdp::{induced_cost, MdpModel, Policy};
use crate::optimize::{
    greedy_actions, improvement_gaps, row_scale, ObjectiveKind, Sense, SolveResult, TraceRecord, OPTIMALITY_TOL,
    RESIDUAL_TOL,
};
use crate::risk::{mean_cvar_cost_table, q_table, RiskParams, RiskSnapshot};
use crate::scalar::Scalar;

/// One improvement step: per state, an action minimizing the pseudo-cost bracket at `y`.
///
/// `g` must be the potentials of `f_β(y, ·, ·)` under `d`.
pub fn policy_improvement<T: Scalar>(
    model: &MdpModel<T>,
    d: &Policy<T>,
    g: &Potentials<T>,
    y: T,
    params: &RiskParams<T>,
) -> Result<Policy<T>> {
    let actions = deterministic_actions(model, d)?;
    if g.g.len() != model.n_states() {
        return Err(Error::DimensionMismatch("potentials do not match model".into()));
    }
    let q = q_table(model, &mean_cvar_cost_table(model, y, params), &g.g);
    Ok(Policy::Deterministic(greedy_actions(&q, actions, Sense::Min)))
}

fn deterministic_actions<'a, T: Scalar>(model: &MdpModel<T>, d: &'a Policy<T>) -> Result<&'a [usize]> {
    d.check_dims(model)?;
    d.as_deterministic().ok_or_else(|| Error::InvalidParameter("a deterministic policy is required".into()))
}

/// Long-run CVaR minimization from `initial`.
pub fn solve_cvar<T: Scalar>(
    model: &MdpModel<T>,
    params: &RiskParams<T>,
    initial: &Policy<T>,
) -> Result<SolveResult<T>> {
    descend(model, &params.without_mean(), initial, ObjectiveKind::Cvar)
}

/// Minimizes `CVaR + β η` from `initial`.
pub fn solve_mean_cvar<T: Scalar>(
    model: &MdpModel<T>,
    params: &RiskParams<T>,
    initial: &Policy<T>,
) -> Result<SolveResult<T>> {
    descend(model, params, initial, ObjectiveKind::MeanCvar { beta: params.beta })
}

fn descend<T: Scalar>(
    model: &MdpModel<T>,
    params: &RiskParams<T>,
    initial: &Policy<T>,
    kind: ObjectiveKind<T>,
) -> Result<SolveResult<T>> {
    let mut policy = deterministic_actions(model, initial)?.to_vec();
    let cap = model.n_states() * model.n_actions() + 1;
    let mut trace = Vec::new();
    for iteration in 0..cap {
        let d = Policy::Deterministic(policy.clone());
        let state = BellmanState::new(model, &d, params)?;
        trace.push(TraceRecord {
            iteration,
            policy: policy.clone(),
            objective: state.objective(params),
            var: Some(state.snap.var),
            cvar: Some(state.snap.cvar),
            mean: state.snap.mean,
        });
        let next = greedy_actions(&state.q, &policy, Sense::Min);
        if next == policy {
            let certificate = state.certify(&policy, params).is_local_opt;
            return Ok(SolveResult {
                objective_kind: kind,
                converged_policy: policy,
                local_opt_certificate: certificate,
                iterations: trace.len(),
                trace,
            });
        }
        policy = next;
    }
    Err(Error::NonConvergence { iterations: cap })
}

/// Everything the improvement step and the optimality check need about one policy.
struct BellmanState<T> {
    snap: RiskSnapshot<T>,
    g: Potentials<T>,
    q: crate::mdp::StateActionCosts<T>,
}

impl<T: Scalar> BellmanState<T> {
    fn new(model: &MdpModel<T>, d: &Policy<T>, params: &RiskParams<T>) -> Result<Self> {
        let snap = RiskSnapshot::new(model, d, params)?;
        let f = mean_cvar_cost_table(model, snap.var, params);
        let g = snap.chain.potentials_for(induced_cost(model, d, &f)?.as_slice())?;
        let q = q_table(model, &f, &g.g);
        Ok(Self { snap, g, q })
    }

    fn objective(&self, params: &RiskParams<T>) -> T {
        self.snap.cvar + params.beta * self.snap.mean
    }

    fn certify(&self, actions: &[usize], params: &RiskParams<T>) -> LocalOptimality<T> {
        let gaps = improvement_gaps(&self.q, actions, Sense::Min);
        let objective = self.objective(params);
        let mut worst_violation = T::zero();
        let mut argmin_ok = true;
        let mut bellman_residual = T::zero();
        let mut residual_ok = true;
        for (i, gap) in gaps.into_iter().enumerate() {
            let row = self.q.row(i);
            let scale = row_scale(row);
            worst_violation = worst_violation.max(gap);
            argmin_ok &= gap <= T::tol(OPTIMALITY_TOL) * scale;
            let best = row.iter().copied().fold(T::infinity(), T::min);
            let r = (self.g.g[i] + objective - best).abs();
            bellman_residual = bellman_residual.max(r);
            residual_ok &= r <= T::tol(RESIDUAL_TOL) * scale;
        }
        LocalOptimality { is_local_opt: argmin_ok && residual_ok, worst_violation, bellman_residual, objective }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimality<T> {
    pub is_local_opt: bool,
    /// Largest decrease of the improvement bracket available at any state.
    pub worst_violation: T,
    /// `max_i |g(i) + objective - min_a bracket(i, a)|`.
    pub bellman_residual: T,
    pub objective: T,
}

/// Checks the Bellman local optimality equations of a deterministic policy
/// for the objective `CVaR + β η` (plain CVaR when `β = 0`).
pub fn check_local_optimality<T: Scalar>(
    model: &MdpModel<T>,
    d: &Policy<T>,
    params: &RiskParams<T>,
) -> Result<LocalOptimality<T>> {
    let actions = deterministic_actions(model, d)?;
    Ok(BellmanState::new(model, d, params)?.certify(actions, params))
}
