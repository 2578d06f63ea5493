use crate::chain::PolicyChain;
use crate::error::{Error, Result};
use crate::mdp::{induced_cost, MdpModel, Policy, StateActionCosts};
use crate::optimize::{
    greedy_actions, improvement_gaps, row_scale, ObjectiveKind, Sense, SolveResult, TraceRecord, OPTIMALITY_TOL,
};
use crate::risk::q_table;
use crate::scalar::Scalar;

/// Classical average-cost policy iteration, started from the one-step greedy policy.
pub fn solve_average_mdp<T: Scalar>(
    model: &MdpModel<T>,
    cost: &StateActionCosts<T>,
    sense: Sense,
) -> Result<SolveResult<T>> {
    let initial = greedy_actions(cost, &vec![0; model.n_states()], sense);
    solve_average_mdp_from(model, cost, sense, initial)
}

pub fn solve_average_mdp_from<T: Scalar>(
    model: &MdpModel<T>,
    cost: &StateActionCosts<T>,
    sense: Sense,
    initial: Vec<usize>,
) -> Result<SolveResult<T>> {
    if cost.n_states() != model.n_states() || cost.n_actions() != model.n_actions() {
        return Err(Error::DimensionMismatch("cost table does not match model".into()));
    }
    let cap = model.n_states() * model.n_actions() + 1;
    let mut policy = initial;
    let mut trace = Vec::new();
    for iteration in 0..cap {
        let d = Policy::Deterministic(policy.clone());
        let chain = PolicyChain::new(model, &d)?;
        let g = chain.potentials_for(induced_cost(model, &d, cost)?.as_slice())?;
        trace.push(TraceRecord {
            iteration,
            policy: policy.clone(),
            objective: g.average,
            var: None,
            cvar: None,
            mean: g.average,
        });
        let q = q_table(model, cost, &g.g);
        let next = greedy_actions(&q, &policy, sense);
        if next == policy {
            let worst = improvement_gaps(&q, &policy, sense)
                .into_iter()
                .zip(0..)
                .fold(T::zero(), |m, (gap, i)| m.max(gap / row_scale(q.row(i))));
            return Ok(SolveResult {
                objective_kind: ObjectiveKind::AverageCost,
                converged_policy: policy,
                local_opt_certificate: worst <= T::tol(OPTIMALITY_TOL),
                iterations: trace.len(),
                trace,
            });
        }
        policy = next;
    }
    Err(Error::NonConvergence { iterations: cap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_picks_cheapest() {
        let m = MdpModel::from_rows(&[vec![1.0], vec![1.0]], &[vec![3.0, 1.0]]).unwrap();
        let r = solve_average_mdp(&m, &m.expected_costs(), Sense::Min).unwrap();
        assert_eq!(r.converged_policy, vec![1]);
        assert_eq!(r.objective(), 1.0);
        assert!(r.local_opt_certificate);
        let r = solve_average_mdp(&m, &m.expected_costs(), Sense::Max).unwrap();
        assert_eq!(r.converged_policy, vec![0]);
        assert_eq!(r.objective(), 3.0);
    }

    #[test]
    fn dimension_mismatch() {
        let m = MdpModel::from_rows(&[vec![1.0], vec![1.0]], &[vec![3.0, 1.0]]).unwrap();
        let c = StateActionCosts::new(1, 1, vec![0.0]).unwrap();
        assert!(solve_average_mdp(&m, &c, Sense::Min).is_err());
    }
}
