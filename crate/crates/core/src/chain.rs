//! Steady-state analysis of policy-induced chains.
//!
//! Every solver in the crate assumes an *ergodic unichain*: exactly one closed
//! communicating class, aperiodic, plus possibly transient states. Irreducible
//! aperiodic chains are the special case without transient states. The
//! stationary distribution is unique and vanishes exactly on transient states.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::mdp::{induced_cost, induced_matrix, MdpModel, Policy, StateActionCosts, TransitionMatrix, STOCHASTIC_TOL};
use crate::scalar::Scalar;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    /// Every closed class is aperiodic.
    pub aperiodic: bool,
    /// Largest period among the closed classes.
    pub period: usize,
    pub closed_classes: usize,
    /// A single closed class.
    pub unichain: bool,
    /// States belonging to a closed class.
    pub recurrent: Vec<bool>,
}

impl ErgodicityReport {
    /// The chain has a unique stationary law that every initial law converges to.
    pub fn is_ergodic(&self) -> bool {
        self.unichain && self.aperiodic
    }

    fn describe(&self) -> String {
        if !self.unichain {
            format!("{} closed classes", self.closed_classes)
        } else {
            format!("closed class has period {}", self.period)
        }
    }
}

pub fn check_ergodicity<T: Scalar>(p: &TransitionMatrix<T>) -> ErgodicityReport {
    let n = p.n();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for (j, &v) in p.row(i).iter().enumerate() {
            if v > T::zero() {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for v in scc {
            component[v.index()] = k;
        }
    }

    let mut recurrent = vec![false; n];
    let mut closed_classes = 0;
    let mut period = 1;
    for (k, scc) in sccs.iter().enumerate() {
        let members: Vec<usize> = scc.iter().map(|v| v.index()).collect();
        let closed =
            members.iter().all(|&i| p.row(i).iter().enumerate().all(|(j, &v)| v <= T::zero() || component[j] == k));
        if !closed {
            continue;
        }
        closed_classes += 1;
        for &i in &members {
            recurrent[i] = true;
        }
        period = period.max(class_period(p, &members, &component, k));
    }

    ErgodicityReport {
        irreducible: sccs.len() == 1,
        aperiodic: period == 1,
        period,
        closed_classes,
        unichain: closed_classes == 1,
        recurrent,
    }
}

/// gcd of `level(u) + 1 - level(v)` over the class's edges, with BFS levels from one member.
fn class_period<T: Scalar>(p: &TransitionMatrix<T>, members: &[usize], component: &[usize], k: usize) -> usize {
    let n = p.n();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[members[0]] = 0;
    queue.push_back(members[0]);
    let mut g = 0;
    while let Some(u) = queue.pop_front() {
        for (v, &w) in p.row(u).iter().enumerate() {
            if w <= T::zero() || component[v] != k {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g.max(1)
}

/// Steady-state law of a policy in both marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution<T> {
    /// `pi(i)`.
    pub pi_state: Vec<T>,
    /// `pi(i, a) = pi(i) d(i, a)`; the occupation measure of the policy.
    pub pi_state_action: StateActionCosts<T>,
}

/// Unique `pi` with `pi P = pi`, `Σ pi = 1`.
///
/// Solved on the closed class with one balance equation replaced by the
/// normalization row; transient states get exactly zero mass.
pub fn stationary_distribution<T: Scalar>(p: &TransitionMatrix<T>) -> Result<Vec<T>> {
    let report = check_ergodicity(p);
    if !report.is_ergodic() {
        return Err(Error::NotErgodic(report.describe()));
    }
    stationary_on_class(p, &report.recurrent)
}

fn stationary_on_class<T: Scalar>(p: &TransitionMatrix<T>, recurrent: &[bool]) -> Result<Vec<T>> {
    let members: Vec<usize> = (0..p.n()).filter(|&i| recurrent[i]).collect();
    let k = members.len();
    // rows of (I - P_CC)^T, last row replaced by ones
    let mut a = DenseMatrix::zeros(k, k);
    for (r, &j) in members.iter().enumerate() {
        for (c, &i) in members.iter().enumerate() {
            let id = if i == j { T::one() } else { T::zero() };
            a[(r, c)] = id - p.get(i, j);
        }
    }
    for c in 0..k {
        a[(k - 1, c)] = T::one();
    }
    let mut rhs = vec![T::zero(); k];
    rhs[k - 1] = T::one();
    let sol = a.solve(&rhs)?;
    let mut pi = vec![T::zero(); p.n()];
    for (&i, v) in members.iter().zip(sol) {
        pi[i] = v.max(T::zero());
    }
    let total: T = pi.iter().copied().sum();
    for v in &mut pi {
        *v = *v / total;
    }
    Ok(pi)
}

/// Induced chain of a policy together with its steady state.
#[derive(Debug, Clone)]
pub struct PolicyChain<T> {
    pub matrix: TransitionMatrix<T>,
    pub stationary: StationaryDistribution<T>,
}

impl<T: Scalar> PolicyChain<T> {
    /// Builds `P^d` and its stationary law, failing unless the chain is an ergodic unichain.
    pub fn new(model: &MdpModel<T>, policy: &Policy<T>) -> Result<Self> {
        let matrix = induced_matrix(model, policy)?;
        let pi_state = stationary_distribution(&matrix)?;
        let n_actions = model.n_actions();
        let mut probs = vec![T::zero(); model.n_states() * n_actions];
        for (i, &w) in pi_state.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            for (a, d) in policy.support(i, n_actions) {
                probs[i * n_actions + a] = w * d;
            }
        }
        let pi_state_action = StateActionCosts::new(model.n_states(), n_actions, probs)?;
        Ok(Self { matrix, stationary: StationaryDistribution { pi_state, pi_state_action } })
    }

    pub fn pi(&self) -> &[T] {
        &self.stationary.pi_state
    }

    /// Potentials for per-state costs `c̄(i)` under this chain.
    pub fn potentials_for(&self, state_cost: &[T]) -> Result<Potentials<T>> {
        let pi = self.pi();
        let n = pi.len();
        let average = dot(pi, state_cost);
        // (I - P + 1 pi) g = c̄ - η·1 has the unique solution with pi·g = 0
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { T::one() } else { T::zero() };
                a[(i, j)] = id - self.matrix.get(i, j) + pi[j];
            }
        }
        let rhs: Vec<T> = state_cost.iter().map(|&c| c - average).collect();
        let g = a.solve(&rhs)?;
        Ok(Potentials { g, average })
    }
}

/// `η = Σ_{i,a} pi(i, a) cost(i, a)`.
pub fn average_cost<T: Scalar>(pi: &StationaryDistribution<T>, cost: &StateActionCosts<T>) -> T {
    dot(pi.pi_state_action.values(), cost.values())
}

/// Solution of the Poisson equation `(I - P) g = c̄ - η 1`, normalized by `pi · g = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potentials<T> {
    pub g: Vec<T>,
    /// Long-run average `η` of the cost the potentials were computed for.
    pub average: T,
}

impl<T: Scalar> Potentials<T> {
    /// `max_i |g(i) - [c̄(i) - η + Σ_j P(i,j) g(j)]|`.
    pub fn poisson_residual(&self, p: &TransitionMatrix<T>, state_cost: &[T]) -> T {
        let pg = p.matrix().right_mul(&self.g);
        self.g
            .iter()
            .zip(state_cost)
            .zip(pg)
            .fold(T::zero(), |m, ((&g, &c), pg)| m.max((g - (c - self.average + pg)).abs()))
    }
}

pub fn potentials<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy<T>,
    cost: &StateActionCosts<T>,
) -> Result<Potentials<T>> {
    let chain = PolicyChain::new(model, policy)?;
    let cbar = induced_cost(model, policy, cost)?;
    chain.potentials_for(cbar.as_slice())
}

/// `nu (P^d)^t`.
pub fn transient_distribution<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy<T>,
    nu: &[T],
    t: usize,
) -> Result<Vec<T>> {
    let p = induced_matrix(model, policy)?;
    if nu.len() != p.n() {
        return Err(Error::DimensionMismatch(format!("initial law has {} entries, chain has {}", nu.len(), p.n())));
    }
    let total: T = nu.iter().copied().sum();
    if nu.iter().any(|&v| !(v >= T::zero())) || (total - T::one()).abs() > T::tol(STOCHASTIC_TOL) {
        return Err(Error::InvalidParameter("initial law is not a probability vector".into()));
    }
    let mut x = nu.to_vec();
    for _ in 0..t {
        x = p.matrix().left_mul(&x);
    }
    Ok(x)
}

pub fn total_variation<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<T>() * T::lit(0.5)
}
