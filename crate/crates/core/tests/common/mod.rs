#![allow(dead_code)]

use cvar_mdp::mdp::{CostTable, MdpModel, Policy, StateActionCosts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model with strictly positive transition rows, so every policy is ergodic.
/// Costs are small integers (ties between outcomes are common); every third
/// instance uses successor-dependent costs.
pub fn random_instance(rng: &mut ChaCha8Rng, max_states: usize, max_actions: usize) -> MdpModel<f64> {
    let s = rng.gen_range(1..=max_states);
    let a = rng.gen_range(1..=max_actions);
    let mut transition = Vec::with_capacity(s * a * s);
    for _ in 0..s * a {
        let row: Vec<f64> = (0..s).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        transition.extend(row.iter().map(|p| p / total));
    }
    let cost = if rng.gen_bool(1.0 / 3.0) {
        CostTable::Transition((0..s * a * s).map(|_| rng.gen_range(0..8) as f64).collect())
    } else {
        CostTable::StateAction(StateActionCosts::from_fn(s, a, |_, _| rng.gen_range(0..8) as f64))
    };
    MdpModel::new(s, a, transition, cost).unwrap()
}

pub fn random_actions(rng: &mut ChaCha8Rng, model: &MdpModel<f64>) -> Vec<usize> {
    (0..model.n_states()).map(|_| rng.gen_range(0..model.n_actions())).collect()
}

/// Every deterministic policy, by counting in base `n_actions`.
pub fn enumerate_policies(n_states: usize, n_actions: usize) -> Vec<Vec<usize>> {
    let total = n_actions.pow(n_states as u32);
    (0..total)
        .map(|mut k| {
            (0..n_states)
                .map(|_| {
                    let a = k % n_actions;
                    k /= n_actions;
                    a
                })
                .collect()
        })
        .collect()
}

/// Stationary law by power iteration of the induced chain.
pub fn power_stationary(model: &MdpModel<f64>, policy: &Policy<f64>) -> Vec<f64> {
    let (s, a) = (model.n_states(), model.n_actions());
    let mut p = vec![vec![0.0; s]; s];
    for (i, row) in p.iter_mut().enumerate() {
        for act in 0..a {
            let w = policy.prob(i, act);
            for (j, v) in row.iter_mut().enumerate() {
                *v += w * model.p(i, act, j);
            }
        }
    }
    let mut pi = vec![1.0 / s as f64; s];
    for _ in 0..200_000 {
        let next: Vec<f64> = (0..s).map(|j| (0..s).map(|i| pi[i] * p[i][j]).sum()).collect();
        let diff = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        pi = next;
        if diff < 1e-16 {
            break;
        }
    }
    pi
}

/// Steady-state one-step loss outcomes `(probability, cost)`, unmerged.
pub fn oracle_outcomes(model: &MdpModel<f64>, policy: &Policy<f64>) -> Vec<(f64, f64)> {
    let pi = power_stationary(model, policy);
    let mut out = Vec::new();
    for (i, &w) in pi.iter().enumerate() {
        for a in 0..model.n_actions() {
            let pa = policy.prob(i, a);
            for j in 0..model.n_states() {
                let p = w * pa * model.p(i, a, j);
                if p > 0.0 {
                    out.push((p, model.cost(i, a, j)));
                }
            }
        }
    }
    out
}

pub fn oracle_pseudo_cvar(outcomes: &[(f64, f64)], y: f64, alpha: f64) -> f64 {
    y + outcomes.iter().map(|(p, c)| p * (c - y).max(0.0)).sum::<f64>() / (1.0 - alpha)
}

/// `min_y` of the pseudo-CVaR, attained at one of the outcome values.
pub fn oracle_cvar(model: &MdpModel<f64>, policy: &Policy<f64>, alpha: f64) -> f64 {
    let outcomes = oracle_outcomes(model, policy);
    outcomes.iter().map(|&(_, y)| oracle_pseudo_cvar(&outcomes, y, alpha)).fold(f64::INFINITY, f64::min)
}

pub fn oracle_mean(model: &MdpModel<f64>, policy: &Policy<f64>) -> f64 {
    oracle_outcomes(model, policy).iter().map(|(p, c)| p * c).sum()
}

pub fn within_pct(value: f64, target: f64, pct: f64) -> bool {
    (value - target).abs() <= pct / 100.0 * target.abs()
}
