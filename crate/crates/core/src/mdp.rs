//! Finite MDP model, policy representations and the policy-induced chain.
//!
//! States and actions are dense 0-based indices. Transition probabilities are
//! stored flat as `p[(i * A + a) * S + j] = p(j | i, a)`.
//!
//! One-step costs come in two flavours:
//!
//! * [`CostTable::StateAction`]: the classical `c(i, a)`;
//! * [`CostTable::Transition`]: a realized cost `c(i, a, j)` that also depends on
//!   the successor state. The long-run cost law then has atoms `c(i, a, j)` with
//!   mass `pi(i, a) p(j | i, a)`, and every expectation-based quantity (mean,
//!   pseudo cost) integrates over `j` first. This is the same as the state-action
//!   model on the augmented chain of transitions, so all results carry over.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Row sums and policy distributions must equal one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// A per-(state, action) table, stored row-major by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionCosts<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> StateActionCosts<T> {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "cost table needs {} entries, got {}",
                n_states * n_actions,
                values.len()
            )));
        }
        Ok(Self { n_states, n_actions, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::DimensionMismatch("ragged cost rows".into()));
        }
        Self::new(rows.len(), n_actions, rows.concat())
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(n_states * n_actions);
        for i in 0..n_states {
            for a in 0..n_actions {
                values.push(f(i, a));
            }
        }
        Self { n_states, n_actions, values }
    }

    #[inline]
    pub fn get(&self, i: usize, a: usize) -> T {
        self.values[i * self.n_actions + a]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_actions..(i + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { n_states: self.n_states, n_actions: self.n_actions, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.n_states).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Per-state values under a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCosts<T>(pub Vec<T>);

impl<T> StateCosts<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTable<T> {
    /// `c(i, a)`, `S * A` entries.
    StateAction(StateActionCosts<T>),
    /// `c(i, a, j)`, laid out like the transition kernel (`S * A * S` entries).
    Transition(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    cost: CostTable<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptySpace { n_states: usize, n_actions: usize },
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    NonFiniteProbability { state: usize, action: usize, next: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    NonFiniteCost { state: usize, action: usize, next: Option<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace { n_states, n_actions } => {
                write!(f, "empty space: {n_states} states, {n_actions} actions")
            }
            Violation::NegativeProbability { state, action, next, value } => {
                write!(f, "p({next} | {state}, {action}) = {value} is negative")
            }
            Violation::NonFiniteProbability { state, action, next } => {
                write!(f, "p({next} | {state}, {action}) is not finite")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row (state {state}, action {action}) sums to {sum}")
            }
            Violation::NonFiniteCost { state, action, next: None } => {
                write!(f, "c({state}, {action}) is not finite")
            }
            Violation::NonFiniteCost { state, action, next: Some(j) } => {
                write!(f, "c({state}, {action}, {j}) is not finite")
            }
        }
    }
}

/// Every invariant violation found in a model; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl<T: Scalar> MdpModel<T> {
    /// Builds a model and rejects it unless every invariant holds.
    pub fn new(n_states: usize, n_actions: usize, transition: Vec<T>, cost: CostTable<T>) -> Result<Self> {
        let model = Self::from_raw(n_states, n_actions, transition, cost)?;
        let report = validate_model(&model);
        if report.is_valid() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report.violations))
        }
    }

    /// Builds a model checking only table shapes. Use [`validate_model`] to
    /// inspect the stochasticity and finiteness invariants.
    pub fn from_raw(n_states: usize, n_actions: usize, transition: Vec<T>, cost: CostTable<T>) -> Result<Self> {
        let sa = n_states * n_actions;
        if transition.len() != sa * n_states {
            return Err(Error::DimensionMismatch(format!(
                "transition kernel needs {} entries, got {}",
                sa * n_states,
                transition.len()
            )));
        }
        match &cost {
            CostTable::StateAction(c) if c.n_states != n_states || c.n_actions != n_actions => {
                return Err(Error::DimensionMismatch(format!(
                    "cost table is {}x{}, model is {n_states}x{n_actions}",
                    c.n_states, c.n_actions
                )));
            }
            CostTable::Transition(c) if c.len() != sa * n_states => {
                return Err(Error::DimensionMismatch(format!(
                    "transition cost table needs {} entries, got {}",
                    sa * n_states,
                    c.len()
                )));
            }
            _ => {}
        }
        Ok(Self { n_states, n_actions, transition, cost })
    }

    /// Convenience constructor from nested rows: `transition[i * A + a][j]`, `cost[i][a]`.
    pub fn from_rows(transition: &[Vec<T>], cost: &[Vec<T>]) -> Result<Self> {
        let costs = StateActionCosts::from_rows(cost)?;
        let (s, a) = (costs.n_states, costs.n_actions);
        if transition.len() != s * a || transition.iter().any(|r| r.len() != s) {
            return Err(Error::DimensionMismatch(format!("transition rows must be {} rows of length {s}", s * a)));
        }
        Self::new(s, a, transition.concat(), CostTable::StateAction(costs))
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `p(· | i, a)`.
    #[inline]
    pub fn row(&self, i: usize, a: usize) -> &[T] {
        let s = self.n_states;
        let k = (i * self.n_actions + a) * s;
        &self.transition[k..k + s]
    }

    #[inline]
    pub fn p(&self, i: usize, a: usize, j: usize) -> T {
        self.row(i, a)[j]
    }

    pub fn transition(&self) -> &[T] {
        &self.transition
    }

    pub fn cost_table(&self) -> &CostTable<T> {
        &self.cost
    }

    pub fn has_transition_costs(&self) -> bool {
        matches!(self.cost, CostTable::Transition(_))
    }

    /// The realized cost of moving from `i` to `j` under `a`.
    #[inline]
    pub fn cost(&self, i: usize, a: usize, j: usize) -> T {
        match &self.cost {
            CostTable::StateAction(c) => c.get(i, a),
            CostTable::Transition(c) => c[(i * self.n_actions + a) * self.n_states + j],
        }
    }

    /// Cost outcomes `(probability, cost)` of taking `a` in `i`, restricted to
    /// positive probabilities.
    pub fn outcomes(&self, i: usize, a: usize) -> Vec<(T, T)> {
        match &self.cost {
            CostTable::StateAction(c) => vec![(T::one(), c.get(i, a))],
            CostTable::Transition(_) => self
                .row(i, a)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > T::zero())
                .map(|(j, &p)| (p, self.cost(i, a, j)))
                .collect(),
        }
    }

    /// `c̄(i, a) = Σ_j p(j | i, a) c(i, a, j)`; the cost table itself for state-action costs.
    pub fn expected_costs(&self) -> StateActionCosts<T> {
        match &self.cost {
            CostTable::StateAction(c) => c.clone(),
            CostTable::Transition(_) => StateActionCosts::from_fn(self.n_states, self.n_actions, |i, a| {
                self.outcomes(i, a).into_iter().map(|(p, c)| p * c).sum()
            }),
        }
    }

    /// `Σ_j p(j | i, a) f(c(i, a, j))` for every pair.
    pub fn expected_transform(&self, f: impl Fn(T) -> T) -> StateActionCosts<T> {
        StateActionCosts::from_fn(self.n_states, self.n_actions, |i, a| {
            self.outcomes(i, a).into_iter().map(|(p, c)| p * f(c)).sum()
        })
    }

    /// A copy with every cost replaced by `f(cost)`.
    pub fn map_costs(&self, f: impl Fn(T) -> T) -> Self {
        let cost = match &self.cost {
            CostTable::StateAction(c) => CostTable::StateAction(c.map(&f)),
            CostTable::Transition(c) => CostTable::Transition(c.iter().map(|&v| f(v)).collect()),
        };
        Self { cost, ..self.clone() }
    }

    /// Total number of deterministic policies, saturating at `usize::MAX`.
    pub fn deterministic_policy_count(&self) -> usize {
        (0..self.n_states).fold(1usize, |acc, _| acc.saturating_mul(self.n_actions))
    }
}

pub fn validate_model<T: Scalar>(model: &MdpModel<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let (s, a_n) = (model.n_states, model.n_actions);
    if s == 0 || a_n == 0 {
        violations.push(Violation::EmptySpace { n_states: s, n_actions: a_n });
        return ValidationReport { violations };
    }
    let tol = T::tol(STOCHASTIC_TOL);
    for i in 0..s {
        for a in 0..a_n {
            let row = model.row(i, a);
            let mut finite = true;
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    finite = false;
                    violations.push(Violation::NonFiniteProbability { state: i, action: a, next: j });
                } else if p < T::zero() {
                    violations.push(Violation::NegativeProbability {
                        state: i,
                        action: a,
                        next: j,
                        value: p.to_f64_lossy(),
                    });
                }
            }
            let sum: T = row.iter().copied().sum();
            if finite && (sum - T::one()).abs() > tol {
                violations.push(Violation::RowSum { state: i, action: a, sum: sum.to_f64_lossy() });
            }
            match &model.cost {
                CostTable::StateAction(c) => {
                    if !c.get(i, a).is_finite() {
                        violations.push(Violation::NonFiniteCost { state: i, action: a, next: None });
                    }
                }
                CostTable::Transition(_) => {
                    for j in 0..s {
                        if !model.cost(i, a, j).is_finite() {
                            violations.push(Violation::NonFiniteCost { state: i, action: a, next: Some(j) });
                        }
                    }
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Stationary policy: deterministic, randomized, or a per-step mixture of two
/// deterministic policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy<T> {
    Deterministic(Vec<usize>),
    /// `probs[i * n_actions + a] = d(i, a)`.
    Randomized {
        n_actions: usize,
        probs: Vec<T>,
    },
    /// Plays `target` with probability `delta` and `base` otherwise, independently at every step.
    Mixed {
        base: Vec<usize>,
        target: Vec<usize>,
        delta: T,
    },
}

impl<T: Scalar> Policy<T> {
    pub fn deterministic(actions: Vec<usize>) -> Self {
        Policy::Deterministic(actions)
    }

    pub fn randomized(n_actions: usize, probs: Vec<T>) -> Result<Self> {
        if n_actions == 0 || !probs.len().is_multiple_of(n_actions) {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities do not form rows of {n_actions}",
                probs.len()
            )));
        }
        let tol = T::tol(STOCHASTIC_TOL);
        for (i, row) in probs.chunks(n_actions).enumerate() {
            let sum: T = row.iter().copied().sum();
            if row.iter().any(|&p| !(p >= T::zero())) || (sum - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("policy row {i} is not a probability distribution")));
            }
        }
        Ok(Policy::Randomized { n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        match self {
            Policy::Deterministic(d) => d.len(),
            Policy::Randomized { n_actions, probs } => probs.len() / n_actions,
            Policy::Mixed { base, .. } => base.len(),
        }
    }

    pub fn as_deterministic(&self) -> Option<&[usize]> {
        match self {
            Policy::Deterministic(d) => Some(d),
            _ => None,
        }
    }

    /// `d(i, a)`.
    pub fn prob(&self, i: usize, a: usize) -> T {
        let ind = |b: bool| if b { T::one() } else { T::zero() };
        match self {
            Policy::Deterministic(d) => ind(d[i] == a),
            Policy::Randomized { n_actions, probs } => probs[i * n_actions + a],
            Policy::Mixed { base, target, delta } => {
                (T::one() - *delta) * ind(base[i] == a) + *delta * ind(target[i] == a)
            }
        }
    }

    /// Actions with positive probability at `i`, with their weights.
    pub fn support(&self, i: usize, n_actions: usize) -> Vec<(usize, T)> {
        match self {
            Policy::Deterministic(d) => vec![(d[i], T::one())],
            _ => (0..n_actions).map(|a| (a, self.prob(i, a))).filter(|&(_, w)| w > T::zero()).collect(),
        }
    }

    /// Checks the policy fits `model`.
    pub fn check_dims(&self, model: &MdpModel<T>) -> Result<()> {
        let s = model.n_states();
        if self.n_states() != s {
            return Err(Error::DimensionMismatch(format!("policy covers {} states, model has {s}", self.n_states())));
        }
        let bad_action = |d: &[usize]| d.iter().any(|&a| a >= model.n_actions());
        let ok = match self {
            Policy::Deterministic(d) => !bad_action(d),
            Policy::Randomized { n_actions, .. } => *n_actions == model.n_actions(),
            Policy::Mixed { base, target, .. } => target.len() == s && !bad_action(base) && !bad_action(target),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("policy actions do not fit {} actions", model.n_actions())))
        }
    }

    /// The table `d(i, a)` for any variant.
    pub fn to_randomized(&self, n_actions: usize) -> Policy<T> {
        let s = self.n_states();
        let probs = (0..s).flat_map(|i| (0..n_actions).map(move |a| (i, a))).map(|(i, a)| self.prob(i, a)).collect();
        Policy::Randomized { n_actions, probs }
    }
}

/// Row-stochastic `P^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<T>(DenseMatrix<T>);

impl<T: Scalar> TransitionMatrix<T> {
    pub fn new(m: DenseMatrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch("transition matrix must be square".into()));
        }
        let tol = T::tol(STOCHASTIC_TOL);
        for i in 0..m.rows() {
            let row = m.row(i);
            let sum: T = row.iter().copied().sum();
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one() + tol)) || (sum - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("row {i} of transition matrix is not stochastic")));
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("transition matrix must be square".into()));
        }
        Self::new(DenseMatrix::from_rows(n, n, rows.concat())?)
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.0
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[(i, j)]
    }
}

/// `P^d(i, j) = Σ_a d(i, a) p(j | i, a)`.
pub fn induced_matrix<T: Scalar>(model: &MdpModel<T>, policy: &Policy<T>) -> Result<TransitionMatrix<T>> {
    policy.check_dims(model)?;
    let s = model.n_states();
    let mut m = DenseMatrix::zeros(s, s);
    for i in 0..s {
        let out = m.row_mut(i);
        for (a, w) in policy.support(i, model.n_actions()) {
            for (o, &p) in out.iter_mut().zip(model.row(i, a)) {
                *o = *o + w * p;
            }
        }
    }
    Ok(TransitionMatrix(m))
}

/// Per-step mixture playing `d_prime` with probability `delta`.
pub fn mix_policies<T: Scalar>(d: &Policy<T>, d_prime: &Policy<T>, delta: T) -> Result<Policy<T>> {
    if !(delta >= T::zero() && delta <= T::one()) {
        return Err(Error::InvalidParameter(format!("mixing weight {delta} outside [0, 1]")));
    }
    let (Some(base), Some(target)) = (d.as_deterministic(), d_prime.as_deterministic()) else {
        return Err(Error::InvalidParameter("only deterministic policies can be mixed".into()));
    };
    if base.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "mixing policies over {} and {} states",
            base.len(),
            target.len()
        )));
    }
    Ok(Policy::Mixed { base: base.to_vec(), target: target.to_vec(), delta })
}

/// `out(i) = Σ_a d(i, a) cost(i, a)`.
pub fn induced_cost<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy<T>,
    cost: &StateActionCosts<T>,
) -> Result<StateCosts<T>> {
    policy.check_dims(model)?;
    if cost.n_states() != model.n_states() || cost.n_actions() != model.n_actions() {
        return Err(Error::DimensionMismatch("cost table does not match model".into()));
    }
    Ok(StateCosts(
        (0..model.n_states())
            .map(|i| policy.support(i, model.n_actions()).into_iter().map(|(a, w)| w * cost.get(i, a)).sum())
            .collect(),
    ))
}
