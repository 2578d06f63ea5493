use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Policy};
use crate::optimize::{solve_cvar, solve_mean_cvar, SolveResult};
use crate::risk::RiskParams;
use crate::scalar::Scalar;

/// Converged objectives closer than this (relative) are the same optimum.
const SAME_OPTIMUM_TOL: f64 = 1e-9;

/// A deterministic policy with i.i.d. uniform actions per state.
pub fn random_policy<T: Scalar, R: Rng + ?Sized>(model: &MdpModel<T>, rng: &mut R) -> Vec<usize> {
    (0..model.n_states()).map(|_| rng.gen_range(0..model.n_actions())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome<T> {
    pub initial: Vec<usize>,
    pub result: std::result::Result<SolveResult<T>, String>,
}

/// Converged runs sharing one objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimum<T> {
    pub objective: T,
    pub cvar: T,
    pub var: T,
    pub mean: T,
    /// Distinct converged policies attaining this value (they may differ on transient states).
    pub policies: Vec<Vec<usize>>,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartResult<T> {
    pub seed: u64,
    /// Best converged run, `None` only if every start failed.
    pub best: Option<SolveResult<T>>,
    pub starts: Vec<StartOutcome<T>>,
    /// Sorted by objective, best first.
    pub optima: Vec<LocalOptimum<T>>,
}

impl<T: Scalar> MultiStartResult<T> {
    pub fn failures(&self) -> usize {
        self.starts.iter().filter(|s| s.result.is_err()).count()
    }

    pub fn distinct_policies(&self) -> usize {
        self.optima.iter().map(|o| o.policies.len()).sum()
    }
}

/// Runs `solve_cvar` from `n_starts` seeded random policies.
pub fn multi_start<T: Scalar>(
    model: &MdpModel<T>,
    params: &RiskParams<T>,
    n_starts: usize,
    seed: u64,
) -> Result<MultiStartResult<T>> {
    let initials = seeded_initials(model, n_starts, seed)?;
    Ok(multi_start_with(model, &params.without_mean(), initials, seed))
}

/// Runs `solve_mean_cvar` (or `solve_cvar` when `β = 0`) from every given initial policy.
pub fn multi_start_with<T: Scalar>(
    model: &MdpModel<T>,
    params: &RiskParams<T>,
    initials: Vec<Vec<usize>>,
    seed: u64,
) -> MultiStartResult<T> {
    let starts: Vec<StartOutcome<T>> = initials
        .into_par_iter()
        .map(|initial| {
            let d = Policy::Deterministic(initial.clone());
            let result = if params.beta == T::zero() {
                solve_cvar(model, params, &d)
            } else {
                solve_mean_cvar(model, params, &d)
            };
            StartOutcome { initial, result: result.map_err(|e| e.to_string()) }
        })
        .collect();

    let converged: Vec<&SolveResult<T>> = starts.iter().filter_map(|s| s.result.as_ref().ok()).collect();
    let best = converged.iter().copied().reduce(|a, b| if b.objective() < a.objective() { b } else { a }).cloned();

    let mut optima: Vec<LocalOptimum<T>> = Vec::new();
    for run in &converged {
        let rec = run.final_record();
        let same = |o: &LocalOptimum<T>| {
            (o.objective - rec.objective).abs() <= T::tol(SAME_OPTIMUM_TOL) * T::one().max(rec.objective.abs())
        };
        match optima.iter_mut().find(|o| same(o)) {
            Some(o) => {
                o.hits += 1;
                if !o.policies.contains(&run.converged_policy) {
                    o.policies.push(run.converged_policy.clone());
                }
            }
            None => optima.push(LocalOptimum {
                objective: rec.objective,
                cvar: rec.cvar.unwrap_or(rec.objective),
                var: rec.var.unwrap_or(rec.objective),
                mean: rec.mean,
                policies: vec![run.converged_policy.clone()],
                hits: 1,
            }),
        }
    }
    optima.sort_by(|a, b| a.objective.partial_cmp(&b.objective).expect("finite objectives"));

    MultiStartResult { seed, best, starts, optima }
}

/// `n_starts` random deterministic policies from a ChaCha8 stream seeded with `seed`.
pub fn seeded_initials<T: Scalar>(model: &MdpModel<T>, n_starts: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("at least one start is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_starts).map(|_| random_policy(model, &mut rng)).collect())
}
