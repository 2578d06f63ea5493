//! Policy-iteration solvers for the long-run CVaR family of objectives.

mod average;
mod cvar;
mod global;
mod maximize;
mod multistart;

pub use average::{solve_average_mdp, solve_average_mdp_from};
pub use cvar::{check_local_optimality, policy_improvement, solve_cvar, solve_mean_cvar, LocalOptimality};
pub use global::{deterministic_policies, solve_global_bruteforce, GlobalRow, GlobalSolveResult};
pub use maximize::{maximize_cvar, MaxSolveResult, SaddlePolicy, SearchPoint};
pub use multistart::{
    multi_start, multi_start_with, random_policy, seeded_initials, LocalOptimum, MultiStartResult, StartOutcome,
};

use serde::{Deserialize, Serialize};

use crate::mdp::{Policy, StateActionCosts};
use crate::scalar::Scalar;

/// Relative slack for argmin ties in policy improvement.
pub const TIE_TOL: f64 = 1e-10;
/// Relative slack for optimality-equation checks.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Relative slack for the Poisson / Bellman residual.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind<T> {
    Cvar,
    MeanCvar { beta: T },
    AverageCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord<T> {
    pub iteration: usize,
    pub policy: Vec<usize>,
    pub objective: T,
    /// VaR of the evaluated policy; absent for the average-cost solver.
    pub var: Option<T>,
    pub cvar: Option<T>,
    /// Long-run average of the expected one-step cost being optimized.
    pub mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult<T> {
    pub objective_kind: ObjectiveKind<T>,
    pub converged_policy: Vec<usize>,
    pub trace: Vec<TraceRecord<T>>,
    pub local_opt_certificate: bool,
    /// Number of evaluate/improve rounds, the final confirming round included.
    pub iterations: usize,
}

impl<T: Scalar> SolveResult<T> {
    pub fn policy(&self) -> Policy<T> {
        Policy::Deterministic(self.converged_policy.clone())
    }

    pub fn final_record(&self) -> &TraceRecord<T> {
        self.trace.last().expect("solver traces are never empty")
    }

    pub fn objective(&self) -> T {
        self.final_record().objective
    }
}

pub(crate) fn row_scale<T: Scalar>(row: &[T]) -> T {
    row.iter().fold(T::one(), |m, v| m.max(v.abs()))
}

/// Per-state argmin (or argmax) of `q`, keeping the incumbent action when it
/// ties with the best within `TIE_TOL`, else the lowest index among the best.
pub(crate) fn greedy_actions<T: Scalar>(q: &StateActionCosts<T>, incumbent: &[usize], sense: Sense) -> Vec<usize> {
    (0..q.n_states())
        .map(|i| {
            let row = q.row(i);
            let oriented = |v: T| if sense == Sense::Min { v } else { -v };
            let best = row.iter().map(|&v| oriented(v)).fold(T::infinity(), T::min);
            let tol = T::tol(TIE_TOL) * row_scale(row);
            let cur = incumbent[i];
            if oriented(row[cur]) <= best + tol {
                cur
            } else {
                row.iter().position(|&v| oriented(v) <= best + tol).expect("nonempty action set")
            }
        })
        .collect()
}

/// Largest gain available by switching from the incumbent action, per state.
pub(crate) fn improvement_gaps<T: Scalar>(q: &StateActionCosts<T>, incumbent: &[usize], sense: Sense) -> Vec<T> {
    (0..q.n_states())
        .map(|i| {
            let row = q.row(i);
            let cur = row[incumbent[i]];
            match sense {
                Sense::Min => cur - row.iter().copied().fold(T::infinity(), T::min),
                Sense::Max => row.iter().copied().fold(T::neg_infinity(), T::max) - cur,
            }
        })
        .collect()
}
