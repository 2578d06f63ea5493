//! Global CVaR minimum by exhausting the candidate VaR values.
//!
//! `CVaR* = min_{y in C} min_d pseudo-CVaR^d(y)`: for every realized cost value
//! `y` one standard average-cost MDP with the pseudo cost at `y` is solved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{MdpModel, Policy};
use crate::optimize::{solve_average_mdp, Sense};
use crate::risk::{candidate_var_set, pseudo_cost_table, RiskParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRow<T> {
    pub y: T,
    pub policy: Vec<usize>,
    /// Optimal long-run average of the pseudo cost at `y`.
    pub pseudo_cvar: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSolveResult<T> {
    pub best_policy: Vec<usize>,
    pub best_cvar: T,
    pub argmin_y: T,
    pub per_y: Vec<GlobalRow<T>>,
}

impl<T: Scalar> GlobalSolveResult<T> {
    pub fn policy(&self) -> Policy<T> {
        Policy::Deterministic(self.best_policy.clone())
    }
}

pub fn solve_global_bruteforce<T: Scalar>(model: &MdpModel<T>, params: &RiskParams<T>) -> Result<GlobalSolveResult<T>> {
    let params = params.without_mean();
    let per_y = candidate_var_set(model)
        .into_par_iter()
        .map(|y| {
            let inner = solve_average_mdp(model, &pseudo_cost_table(model, y, &params), Sense::Min)?;
            Ok(GlobalRow { y, pseudo_cvar: inner.objective(), policy: inner.converged_policy })
        })
        .collect::<Result<Vec<_>>>()?;
    // first minimal row, so ties resolve toward the smallest y
    let best = per_y
        .iter()
        .reduce(|a, b| if b.pseudo_cvar < a.pseudo_cvar { b } else { a })
        .expect("candidate set is never empty");
    Ok(GlobalSolveResult {
        best_policy: best.policy.clone(),
        best_cvar: best.pseudo_cvar,
        argmin_y: best.y,
        per_y: per_y.clone(),
    })
}

/// Every deterministic policy of the model in lexicographic order (state 0 varies slowest).
pub fn deterministic_policies<T: Scalar>(model: &MdpModel<T>) -> impl Iterator<Item = Vec<usize>> {
    let (s, a) = (model.n_states(), model.n_actions());
    let total = model.deterministic_policy_count();
    (0..total).map(move |mut k| {
        let mut d = vec![0; s];
        for slot in d.iter_mut().rev() {
            *slot = k % a;
            k /= a;
        }
        d
    })
}
