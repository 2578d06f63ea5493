//! Long-run CVaR maximization through the minimax interchange
//!
//! ```text
//! max_x min_y f(x, y) = min_y h(y),   h(y) = max_d pseudo-CVaR^d(y)
//! ```
//!
//! `h` is convex and piecewise linear. It is evaluated on the candidate set,
//! the best grid neighbourhood is narrowed by golden-section search, and the
//! last bracket is polished by intersecting the two active inner lines. The
//! maximizing occupation measure can be a strict mixture of two deterministic
//! policies; it is recovered and returned as a randomized policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::PolicyChain;
use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Policy};
use crate::optimize::{solve_average_mdp, Sense};
use crate::risk::{loss_distribution_of, pseudo_cost_table, DiscreteLossDistribution, RiskParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint<T> {
    pub y: T,
    /// `h(y)`.
    pub value: T,
    pub policy: Vec<usize>,
}

/// Saddle-point strategy of the maximizing player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePolicy<T> {
    /// Active inner policy with the smallest left slope at the optimum.
    pub left: Vec<usize>,
    /// Active inner policy with the largest right slope at the optimum.
    pub right: Vec<usize>,
    /// Occupation-measure weight of `left`.
    pub weight_left: T,
    /// Randomized policy whose occupation measure is the mixture.
    pub policy: Policy<T>,
    /// Whether the slope conditions of a saddle point were met.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxSolveResult<T> {
    pub max_cvar: T,
    pub outer_y: T,
    /// Maximizing policy (the saddle strategy; deterministic when no mixing is needed).
    pub inner_policy: Policy<T>,
    pub saddle: SaddlePolicy<T>,
    /// Every `(y, h(y))` evaluated, in evaluation order.
    pub search_trace: Vec<SearchPoint<T>>,
}

struct Line<T> {
    policy: Vec<usize>,
    dist: DiscreteLossDistribution<T>,
    pi_sa: Vec<T>,
}

impl<T: Scalar> Line<T> {
    fn at(&self, y: T, params: &RiskParams<T>) -> T {
        self.dist.pseudo_cvar(y, params)
    }

    /// `(left, right)` derivatives of the pseudo-CVaR in `y`.
    fn slopes(&self, y: T, params: &RiskParams<T>) -> (T, T) {
        let scale = T::one() / (T::one() - params.alpha);
        let above: T = self.dist.atoms().iter().filter(|a| a.value > y).map(|a| a.probability).sum();
        let at_or_above: T = self.dist.atoms().iter().filter(|a| a.value >= y).map(|a| a.probability).sum();
        (T::one() - at_or_above * scale, T::one() - above * scale)
    }
}

pub fn maximize_cvar<T: Scalar>(model: &MdpModel<T>, params: &RiskParams<T>, tol: T) -> Result<MaxSolveResult<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let params = params.without_mean();
    let inner = |y: T| -> Result<SearchPoint<T>> {
        let r = solve_average_mdp(model, &pseudo_cost_table(model, y, &params), Sense::Max)?;
        Ok(SearchPoint { y, value: r.objective(), policy: r.converged_policy })
    };

    let grid = crate::risk::candidate_var_set(model);
    let mut trace: Vec<SearchPoint<T>> = grid.par_iter().map(|&y| inner(y)).collect::<Result<_>>()?;
    let k = argmin(&trace);
    let span = grid[grid.len() - 1] - grid[0];

    if grid.len() > 1 {
        let mut a = grid[k.saturating_sub(1)];
        let mut b = grid[(k + 1).min(grid.len() - 1)];
        let ratio = T::lit(0.5 * (5f64.sqrt() - 1.0));
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut p1 = inner(x1)?;
        let mut p2 = inner(x2)?;
        let width = tol * span;
        while b - a > width {
            if p1.value <= p2.value {
                b = x2;
                x2 = x1;
                x1 = b - ratio * (b - a);
                trace.push(p2);
                p2 = p1;
                p1 = inner(x1)?;
            } else {
                a = x1;
                x1 = x2;
                x2 = a + ratio * (b - a);
                trace.push(p1);
                p1 = p2;
                p2 = inner(x2)?;
            }
        }
        trace.push(p1);
        trace.push(p2);
        let ends = [inner(a)?, inner(b)?];
        if let Some(y) = polish(model, &params, &ends)? {
            trace.push(inner(y)?);
        }
        trace.extend(ends);
    }

    let best = &trace[argmin(&trace)];
    let (max_cvar, outer_y) = (best.value, best.y);
    let saddle = saddle_policy(model, &params, &trace, outer_y, max_cvar)?;
    Ok(MaxSolveResult { max_cvar, outer_y, inner_policy: saddle.policy.clone(), saddle, search_trace: trace })
}

fn argmin<T: Scalar>(points: &[SearchPoint<T>]) -> usize {
    (0..points.len()).reduce(|i, j| if points[j].value < points[i].value { j } else { i }).expect("nonempty search")
}

fn line<T: Scalar>(model: &MdpModel<T>, policy: &[usize]) -> Result<Line<T>> {
    let chain = PolicyChain::new(model, &Policy::Deterministic(policy.to_vec()))?;
    let dist = loss_distribution_of(model, &chain.stationary)?;
    Ok(Line { policy: policy.to_vec(), dist, pi_sa: chain.stationary.pi_state_action.values().to_vec() })
}

/// Crossing of the inner lines active at the two ends of the final bracket.
fn polish<T: Scalar>(model: &MdpModel<T>, params: &RiskParams<T>, ends: &[SearchPoint<T>; 2]) -> Result<Option<T>> {
    let (a, b) = (ends[0].y, ends[1].y);
    if ends[0].policy == ends[1].policy || !(b > a) {
        return Ok(None);
    }
    let la = line(model, &ends[0].policy)?;
    let lb = line(model, &ends[1].policy)?;
    let slope = |l: &Line<T>| (l.at(b, params) - l.at(a, params)) / (b - a);
    let (sa, sb) = (slope(&la), slope(&lb));
    if sa == sb {
        return Ok(None);
    }
    let y = a + (lb.at(a, params) - la.at(a, params)) / (sa - sb);
    Ok((y >= a && y <= b).then_some(y))
}

fn saddle_policy<T: Scalar>(
    model: &MdpModel<T>,
    params: &RiskParams<T>,
    trace: &[SearchPoint<T>],
    y: T,
    value: T,
) -> Result<SaddlePolicy<T>> {
    let mut candidates: Vec<&[usize]> = Vec::new();
    for p in trace {
        if !candidates.contains(&p.policy.as_slice()) {
            candidates.push(&p.policy);
        }
    }
    let tol = T::tol(1e-9) * T::one().max(value.abs());
    let mut active = Vec::new();
    for policy in candidates {
        let l = line(model, policy)?;
        if l.at(y, params) >= value - tol {
            let slopes = l.slopes(y, params);
            active.push((l, slopes));
        }
    }
    let slope_tol = T::tol(1e-12);
    let right = active
        .iter()
        .reduce(|p, q| if q.1 .1 > p.1 .1 { q } else { p })
        .expect("the optimum's own inner policy is active");
    let left = active
        .iter()
        .reduce(|p, q| if q.1 .0 < p.1 .0 { q } else { p })
        .expect("the optimum's own inner policy is active");
    let pure = |(l, (lo, hi)): &(Line<T>, (T, T))| (*lo <= slope_tol && *hi >= -slope_tol).then(|| l.policy.clone());
    if let Some(d) = pure(right).or_else(|| pure(left)) {
        return Ok(SaddlePolicy {
            left: d.clone(),
            right: d.clone(),
            weight_left: T::one(),
            policy: Policy::Deterministic(d),
            verified: true,
        });
    }

    let (s_left, s_right) = (left.1 .1, right.1 .1);
    if !(s_right >= T::zero() && s_left < T::zero()) {
        let d = trace[argmin(trace)].policy.clone();
        return Ok(SaddlePolicy {
            left: d.clone(),
            right: d.clone(),
            weight_left: T::one(),
            policy: Policy::Deterministic(d),
            verified: false,
        });
    }
    // right slope of the mixture vanishes; its left slope is then nonpositive
    let weight_left = s_right / (s_right - s_left);
    let n_actions = model.n_actions();
    let x: Vec<T> = left
        .0
        .pi_sa
        .iter()
        .zip(&right.0.pi_sa)
        .map(|(&l, &r)| weight_left * l + (T::one() - weight_left) * r)
        .collect();
    let mut probs = vec![T::zero(); x.len()];
    for (i, row) in x.chunks(n_actions).enumerate() {
        let mass: T = row.iter().copied().sum();
        for a in 0..n_actions {
            probs[i * n_actions + a] = if mass > T::zero() {
                row[a] / mass
            } else if a == left.0.policy[i] {
                T::one()
            } else {
                T::zero()
            };
        }
    }
    Ok(SaddlePolicy {
        left: left.0.policy.clone(),
        right: right.0.policy.clone(),
        weight_left,
        policy: Policy::Randomized { n_actions, probs },
        verified: true,
    })
}
