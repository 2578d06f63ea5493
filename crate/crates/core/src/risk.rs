//! Long-run VaR/CVaR of the steady-state one-step cost and the quantities the
//! sensitivity-based optimizers are built on.
//!
//! The canonical CVaR is the Rockafellar–Uryasev functional
//!
//! ```text
//! CVaR = min_y { y + E[(C - y)^+] / (1 - α) }
//! ```
//!
//! evaluated at `y = VaR`. For discrete laws this can differ from the tail
//! conditional expectation `E[C | C >= VaR]`, which [`EvaluationReport`] carries
//! separately as a diagnostic.

use serde::{Deserialize, Serialize};

use crate::chain::{average_cost, PolicyChain, Potentials, StationaryDistribution};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::mdp::{induced_cost, MdpModel, Policy, StateActionCosts, STOCHASTIC_TOL};
use crate::scalar::Scalar;

/// Slack on the cumulative probability when scanning for the α-quantile.
pub const QUANTILE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams<T> {
    /// Probability level, `0 < alpha < 1`.
    pub alpha: T,
    /// Weight of the mean in the mean-CVaR objective, `beta >= 0`.
    pub beta: T,
}

impl<T: Scalar> RiskParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        if !(beta >= T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be a nonnegative real")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn cvar(alpha: T) -> Result<Self> {
        Self::new(alpha, T::zero())
    }

    pub fn without_mean(self) -> Self {
        Self { beta: T::zero(), ..self }
    }

    #[inline]
    fn tail_scale(&self) -> T {
        T::one() / (T::one() - self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom<T> {
    pub value: T,
    pub probability: T,
}

/// Finite loss law with strictly increasing atom values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLossDistribution<T> {
    atoms: Vec<Atom<T>>,
}

impl<T: Scalar> DiscreteLossDistribution<T> {
    /// Sorts the atoms and merges exactly equal values. Zero-mass atoms are dropped.
    pub fn new(atoms: impl IntoIterator<Item = (T, T)>) -> Result<Self> {
        let mut raw: Vec<(T, T)> = atoms.into_iter().filter(|&(_, p)| p != T::zero()).collect();
        if raw.iter().any(|&(v, p)| !v.is_finite() || !(p > T::zero())) {
            return Err(Error::InvalidParameter("atoms need finite values and nonnegative mass".into()));
        }
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
        let mut merged: Vec<Atom<T>> = Vec::with_capacity(raw.len());
        for (value, probability) in raw {
            match merged.last_mut() {
                Some(last) if last.value == value => last.probability = last.probability + probability,
                _ => merged.push(Atom { value, probability }),
            }
        }
        let total: T = merged.iter().map(|a| a.probability).sum();
        if (total - T::one()).abs() > T::tol(STOCHASTIC_TOL) {
            return Err(Error::InvalidParameter(format!("atom masses sum to {total}")));
        }
        Ok(Self { atoms: merged })
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn mean(&self) -> T {
        self.atoms.iter().map(|a| a.value * a.probability).sum()
    }

    pub fn std_dev(&self) -> T {
        let m = self.mean();
        self.atoms.iter().map(|a| (a.value - m) * (a.value - m) * a.probability).sum::<T>().sqrt()
    }

    /// `F(v) = P(C <= v)`.
    pub fn cdf(&self, v: T) -> T {
        self.atoms.iter().take_while(|a| a.value <= v).map(|a| a.probability).sum()
    }

    /// `y + E[(C - y)^+] / (1 - α)`.
    pub fn pseudo_cvar(&self, y: T, params: &RiskParams<T>) -> T {
        let excess: T = self.atoms.iter().map(|a| (a.value - y).max(T::zero()) * a.probability).sum();
        y + excess * params.tail_scale()
    }

    /// `E[C | C >= v]`.
    pub fn tail_expectation(&self, v: T) -> T {
        let (num, den) = self
            .atoms
            .iter()
            .filter(|a| a.value >= v)
            .fold((T::zero(), T::zero()), |(n, d), a| (n + a.value * a.probability, d + a.probability));
        num / den
    }
}

/// `y + (c - y)^+ / (1 - α)`.
#[inline]
pub fn pseudo_cost<T: Scalar>(c: T, y: T, params: &RiskParams<T>) -> T {
    y + (c - y).max(T::zero()) * params.tail_scale()
}

/// Pseudo cost plus `β c`.
#[inline]
pub fn mean_cvar_cost<T: Scalar>(c: T, y: T, params: &RiskParams<T>) -> T {
    pseudo_cost(c, y, params) + params.beta * c
}

/// Pseudo costs of every state-action pair, integrated over successors when
/// costs depend on them.
pub fn pseudo_cost_table<T: Scalar>(model: &MdpModel<T>, y: T, params: &RiskParams<T>) -> StateActionCosts<T> {
    model.expected_transform(|c| pseudo_cost(c, y, params))
}

/// Mean-CVaR costs `f_β(y, i, a)` of every state-action pair.
pub fn mean_cvar_cost_table<T: Scalar>(model: &MdpModel<T>, y: T, params: &RiskParams<T>) -> StateActionCosts<T> {
    model.expected_transform(|c| mean_cvar_cost(c, y, params))
}

/// Atoms are the realized costs with their steady-state mass.
pub fn loss_distribution_of<T: Scalar>(
    model: &MdpModel<T>,
    pi: &StationaryDistribution<T>,
) -> Result<DiscreteLossDistribution<T>> {
    let mut atoms = Vec::new();
    for i in 0..model.n_states() {
        for a in 0..model.n_actions() {
            let w = pi.pi_state_action.get(i, a);
            if w == T::zero() {
                continue;
            }
            atoms.extend(model.outcomes(i, a).into_iter().map(|(p, c)| (c, w * p)));
        }
    }
    DiscreteLossDistribution::new(atoms)
}

pub fn steady_loss_distribution<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy<T>,
) -> Result<DiscreteLossDistribution<T>> {
    let chain = PolicyChain::new(model, policy)?;
    loss_distribution_of(model, &chain.stationary)
}

/// Smallest atom value whose cumulative mass reaches `α`.
pub fn var_of<T: Scalar>(dist: &DiscreteLossDistribution<T>, params: &RiskParams<T>) -> T {
    let threshold = params.alpha - T::tol(QUANTILE_TOL);
    let mut cum = T::zero();
    for atom in dist.atoms() {
        cum = cum + atom.probability;
        if cum >= threshold {
            return atom.value;
        }
    }
    dist.atoms().last().expect("nonempty distribution").value
}

fn pseudo_cvar_on<T: Scalar>(model: &MdpModel<T>, pi: &StationaryDistribution<T>, y: T, params: &RiskParams<T>) -> T {
    average_cost(pi, &pseudo_cost_table(model, y, params))
}

/// Long-run average of the pseudo cost at `y`.
pub fn pseudo_cvar<T: Scalar>(model: &MdpModel<T>, policy: &Policy<T>, y: T, params: &RiskParams<T>) -> Result<T> {
    let chain = PolicyChain::new(model, policy)?;
    Ok(pseudo_cvar_on(model, &chain.stationary, y, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarCvar<T> {
    pub var: T,
    pub cvar: T,
}

/// Steady-state snapshot of one policy, shared by the evaluators and solvers.
#[derive(Debug, Clone)]
pub(crate) struct RiskSnapshot<T> {
    pub chain: PolicyChain<T>,
    pub dist: DiscreteLossDistribution<T>,
    pub var: T,
    pub cvar: T,
    pub mean: T,
}

impl<T: Scalar> RiskSnapshot<T> {
    pub fn new(model: &MdpModel<T>, policy: &Policy<T>, params: &RiskParams<T>) -> Result<Self> {
        let chain = PolicyChain::new(model, policy)?;
        let dist = loss_distribution_of(model, &chain.stationary)?;
        let var = var_of(&dist, params);
        let cvar = pseudo_cvar_on(model, &chain.stationary, var, params);
        let mean = average_cost(&chain.stationary, &model.expected_costs());
        Ok(Self { chain, dist, var, cvar, mean })
    }
}

pub fn long_run_cvar<T: Scalar>(model: &MdpModel<T>, policy: &Policy<T>, params: &RiskParams<T>) -> Result<VarCvar<T>> {
    let snap = RiskSnapshot::new(model, policy, params)?;
    Ok(VarCvar { var: snap.var, cvar: snap.cvar })
}

/// Sorted distinct realized costs; the VaR of every policy lies in this set.
pub fn candidate_var_set<T: Scalar>(model: &MdpModel<T>) -> Vec<T> {
    let mut values: Vec<T> = (0..model.n_states())
        .flat_map(|i| (0..model.n_actions()).map(move |a| (i, a)))
        .flat_map(|(i, a)| model.outcomes(i, a).into_iter().map(|(_, c)| c))
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    values.dedup();
    values
}

/// `CVaR^{d'} - pseudo-CVaR^{d'}(VaR^d)`; never positive.
pub fn delta_cvar<T: Scalar>(
    model: &MdpModel<T>,
    d: &Policy<T>,
    d_prime: &Policy<T>,
    params: &RiskParams<T>,
) -> Result<T> {
    let base = RiskSnapshot::new(model, d, params)?;
    let other = RiskSnapshot::new(model, d_prime, params)?;
    Ok(other.cvar - pseudo_cvar_on(model, &other.chain.stationary, base.var, params))
}

/// Pieces of the exact CVaR difference between two policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarDifference<T> {
    /// `Σ_i pi^{d'}(i) [Σ_j (P^{d'} - P^d)(i, j) g^d(j) + c̃^{d'}(i) - c̃^d(i)]`, everything at `y = VaR^d`.
    pub potential_term: T,
    pub delta_cvar: T,
}

impl<T: Scalar> CvarDifference<T> {
    /// Equals `CVaR^{d'} - CVaR^d`.
    pub fn total(&self) -> T {
        self.potential_term + self.delta_cvar
    }
}

/// Bracket of the policy-improvement step for every (state, action) pair:
/// `cost(i, a) + Σ_j p(j | i, a) g(j)`.
pub(crate) fn q_table<T: Scalar>(model: &MdpModel<T>, cost: &StateActionCosts<T>, g: &[T]) -> StateActionCosts<T> {
    StateActionCosts::from_fn(model.n_states(), model.n_actions(), |i, a| cost.get(i, a) + dot(model.row(i, a), g))
}

/// Expected value of `q` at state `i` under the policy's action weights.
fn policy_q<T: Scalar>(policy: &Policy<T>, q: &StateActionCosts<T>, i: usize) -> T {
    policy.support(i, q.n_actions()).into_iter().map(|(a, w)| w * q.get(i, a)).sum()
}

pub fn cvar_difference<T: Scalar>(
    model: &MdpModel<T>,
    d: &Policy<T>,
    d_prime: &Policy<T>,
    params: &RiskParams<T>,
) -> Result<CvarDifference<T>> {
    let base = RiskSnapshot::new(model, d, params)?;
    let other = RiskSnapshot::new(model, d_prime, params)?;
    let pseudo = pseudo_cost_table(model, base.var, params);
    let g = base.chain.potentials_for(induced_cost(model, d, &pseudo)?.as_slice())?;
    let q = q_table(model, &pseudo, &g.g);
    let potential_term =
        other.chain.pi().iter().enumerate().map(|(i, &w)| w * (policy_q(d_prime, &q, i) - policy_q(d, &q, i))).sum();
    let delta_cvar = other.cvar - pseudo_cvar_on(model, &other.chain.stationary, base.var, params);
    Ok(CvarDifference { potential_term, delta_cvar })
}

/// Derivative of the CVaR of the mixture `(1 - δ) d + δ d'` at `δ = 0`.
pub fn cvar_derivative<T: Scalar>(
    model: &MdpModel<T>,
    d: &Policy<T>,
    d_prime: &Policy<T>,
    params: &RiskParams<T>,
) -> Result<T> {
    d_prime.check_dims(model)?;
    let base = RiskSnapshot::new(model, d, params)?;
    let pseudo = pseudo_cost_table(model, base.var, params);
    let g = base.chain.potentials_for(induced_cost(model, d, &pseudo)?.as_slice())?;
    let q = q_table(model, &pseudo, &g.g);
    Ok(base.chain.pi().iter().enumerate().map(|(i, &w)| w * (policy_q(d_prime, &q, i) - policy_q(d, &q, i))).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport<T> {
    pub alpha: T,
    pub beta: T,
    pub pi: StationaryDistribution<T>,
    pub mean_cost: T,
    pub std_dev: T,
    pub var: T,
    pub cvar: T,
    pub pseudo_cvar_at_var: T,
    /// `cvar + beta * mean_cost`.
    pub mean_cvar: T,
    /// `E[C | C >= VaR]`, for comparison with the functional CVaR.
    pub tail_expectation: T,
    pub loss_dist: DiscreteLossDistribution<T>,
    /// Potentials of the pseudo cost at `y = VaR`.
    pub potentials: Potentials<T>,
}

pub fn evaluate<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy<T>,
    params: &RiskParams<T>,
) -> Result<EvaluationReport<T>> {
    let snap = RiskSnapshot::new(model, policy, params)?;
    let pseudo = pseudo_cost_table(model, snap.var, params);
    let potentials = snap.chain.potentials_for(induced_cost(model, policy, &pseudo)?.as_slice())?;
    Ok(EvaluationReport {
        alpha: params.alpha,
        beta: params.beta,
        mean_cost: snap.mean,
        std_dev: snap.dist.std_dev(),
        var: snap.var,
        cvar: snap.cvar,
        pseudo_cvar_at_var: potentials.average,
        mean_cvar: snap.cvar + params.beta * snap.mean,
        tail_expectation: snap.dist.tail_expectation(snap.var),
        loss_dist: snap.dist,
        pi: snap.chain.stationary,
        potentials,
    })
}
