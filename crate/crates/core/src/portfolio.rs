//! Two-asset portfolio management MDP driven by a Markov chain of market conditions.
//!
//! State `(e, w)`: market condition `e` and current risky-asset weight `w`
//! (always a grid value). Action `a`: the risky weight for the next period, so
//! `w' = a` and `e'` follows the market chain. Wealth is reset to
//! `wealth_scale` every period and the per-period reward is
//!
//! ```text
//! r = [r_risky(e') a - b |a - w| + r_f (1 - a)] * wealth_scale
//! ```
//!
//! with cost `-r`. Under [`CostModel::Realized`] the cost depends on `e'`, so
//! the loss law captures the return risk of the next period; under
//! [`CostModel::Expected`] it is averaged over `e'` first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostTable, MdpModel, StateActionCosts, STOCHASTIC_TOL};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// `c((e, w), a, (e', a))`.
    #[default]
    Realized,
    /// `c((e, w), a) = Σ_e' p(e, e') c((e, w), a, (e', a))`.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioConfig<T> {
    pub market_transition: Vec<Vec<T>>,
    /// Per-period return of the risky asset in each market condition.
    pub risky_returns: Vec<T>,
    pub risk_free_rate: T,
    pub transaction_cost_rate: T,
    /// Strictly increasing risky-asset weights in `[0, 1]`.
    pub action_grid: Vec<T>,
    pub wealth_scale: T,
    pub alpha: T,
    #[serde(default)]
    pub cost_model: CostModel,
    /// Costs are rounded to this many decimals so equal losses merge exactly.
    #[serde(default = "default_decimals")]
    pub cost_decimals: i32,
}

fn default_decimals() -> i32 {
    10
}

const MARKET: [[f64; 10]; 10] = [
    [0.20, 0.13, 0.19, 0.09, 0.12, 0.06, 0.12, 0.04, 0.04, 0.01],
    [0.18, 0.15, 0.15, 0.09, 0.08, 0.15, 0.06, 0.07, 0.04, 0.03],
    [0.13, 0.09, 0.12, 0.22, 0.14, 0.14, 0.04, 0.03, 0.07, 0.02],
    [0.11, 0.10, 0.13, 0.12, 0.11, 0.15, 0.07, 0.08, 0.07, 0.06],
    [0.07, 0.14, 0.15, 0.10, 0.13, 0.11, 0.11, 0.05, 0.07, 0.07],
    [0.07, 0.09, 0.08, 0.06, 0.06, 0.18, 0.14, 0.14, 0.07, 0.11],
    [0.08, 0.05, 0.13, 0.16, 0.11, 0.10, 0.11, 0.07, 0.09, 0.10],
    [0.09, 0.06, 0.08, 0.16, 0.10, 0.07, 0.11, 0.13, 0.08, 0.12],
    [0.07, 0.09, 0.07, 0.08, 0.13, 0.08, 0.12, 0.09, 0.13, 0.14],
    [0.01, 0.15, 0.11, 0.08, 0.04, 0.15, 0.10, 0.11, 0.03, 0.22],
];
const RISKY_RETURNS: [f64; 10] = [0.09, 0.08, 0.06, 0.05, 0.04, 0.03, 0.02, -0.001, -0.002, -0.05];
const GRID: [f64; 6] = [0.1, 0.25, 0.4, 0.55, 0.7, 0.85];

/// Ten market conditions, six weights, daily risk-free rate 0.01%,
/// transaction cost 0.45%, wealth 10^4, α = 0.66.
pub fn default_config<T: Scalar>() -> PortfolioConfig<T> {
    PortfolioConfig {
        market_transition: MARKET.iter().map(|r| r.iter().map(|&p| T::lit(p)).collect()).collect(),
        risky_returns: RISKY_RETURNS.iter().map(|&r| T::lit(r)).collect(),
        risk_free_rate: T::lit(0.0001),
        transaction_cost_rate: T::lit(0.0045),
        action_grid: GRID.iter().map(|&g| T::lit(g)).collect(),
        wealth_scale: T::lit(1e4),
        alpha: T::lit(0.66),
        cost_model: CostModel::Realized,
        cost_decimals: default_decimals(),
    }
}

impl<T: Scalar> PortfolioConfig<T> {
    pub fn n_conditions(&self) -> usize {
        self.market_transition.len()
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.n_conditions();
        let tol = T::tol(STOCHASTIC_TOL);
        if e == 0 || self.market_transition.iter().any(|r| r.len() != e) || self.risky_returns.len() != e {
            return Err(Error::DimensionMismatch(format!("market transition must be {e}x{e} with {e} risky returns")));
        }
        for (i, row) in self.market_transition.iter().enumerate() {
            let sum: T = row.iter().copied().sum();
            if row.iter().any(|&p| !(p >= T::zero())) || (sum - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("market transition row {i} is not stochastic")));
            }
        }
        if self.action_grid.is_empty()
            || self.action_grid.iter().any(|&w| !(w >= T::zero() && w <= T::one()))
            || self.action_grid.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::InvalidParameter("action grid must be strictly increasing within [0, 1]".into()));
        }
        if !(self.transaction_cost_rate >= T::zero()) {
            return Err(Error::InvalidParameter("transaction cost rate must be nonnegative".into()));
        }
        let finite = [self.risk_free_rate, self.wealth_scale].iter().chain(&self.risky_returns).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("returns and wealth scale must be finite".into()));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn round(&self, v: T) -> T {
        let f = T::lit(10f64.powi(self.cost_decimals));
        (v * f).round() / f
    }

    /// Cost of moving from weight `w` to `a` when the market lands in `next`.
    pub fn realized_cost(&self, w: usize, a: usize, next: usize) -> T {
        let (gw, ga) = (self.action_grid[w], self.action_grid[a]);
        let reward = self.risky_returns[next] * ga - self.transaction_cost_rate * (ga - gw).abs()
            + self.risk_free_rate * (T::one() - ga);
        -reward * self.wealth_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLabel {
    pub market_condition: usize,
    pub weight_index: usize,
}

/// Bijection between `(e, w)` labels and dense state indices `e * |grid| + w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioLabeling<T> {
    pub n_conditions: usize,
    pub grid: Vec<T>,
}

impl<T: Scalar> PortfolioLabeling<T> {
    pub fn n_states(&self) -> usize {
        self.n_conditions * self.grid.len()
    }

    pub fn index(&self, label: StateLabel) -> usize {
        label.market_condition * self.grid.len() + label.weight_index
    }

    pub fn label(&self, index: usize) -> StateLabel {
        StateLabel { market_condition: index / self.grid.len(), weight_index: index % self.grid.len() }
    }
}

pub fn build_mdp<T: Scalar>(config: &PortfolioConfig<T>) -> Result<(MdpModel<T>, PortfolioLabeling<T>)> {
    config.validate()?;
    let labeling = PortfolioLabeling { n_conditions: config.n_conditions(), grid: config.action_grid.clone() };
    let (n_s, n_a) = (labeling.n_states(), config.action_grid.len());
    let mut transition = vec![T::zero(); n_s * n_a * n_s];
    let mut realized = vec![T::zero(); n_s * n_a * n_s];
    for s in 0..n_s {
        let StateLabel { market_condition: e, weight_index: w } = labeling.label(s);
        for a in 0..n_a {
            let base = (s * n_a + a) * n_s;
            for (e2, &p) in config.market_transition[e].iter().enumerate() {
                let j = labeling.index(StateLabel { market_condition: e2, weight_index: a });
                transition[base + j] = p;
                realized[base + j] = config.round(config.realized_cost(w, a, e2));
            }
        }
    }
    let cost = match config.cost_model {
        CostModel::Realized => CostTable::Transition(realized),
        CostModel::Expected => CostTable::StateAction(StateActionCosts::from_fn(n_s, n_a, |s, a| {
            let StateLabel { market_condition: e, weight_index: w } = labeling.label(s);
            let expected: T =
                config.market_transition[e].iter().enumerate().map(|(e2, &p)| p * config.realized_cost(w, a, e2)).sum();
            config.round(expected)
        })),
    };
    Ok((MdpModel::new(n_s, n_a, transition, cost)?, labeling))
}

/// Chosen weight for every (current weight, market condition): rows follow the
/// grid, columns the market conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMatrix<T> {
    pub weights: Vec<T>,
    pub rows: Vec<Vec<T>>,
}

pub fn describe_policy<T: Scalar>(policy: &[usize], labeling: &PortfolioLabeling<T>) -> Result<PolicyMatrix<T>> {
    if policy.len() != labeling.n_states() || policy.iter().any(|&a| a >= labeling.grid.len()) {
        return Err(Error::DimensionMismatch(format!(
            "policy does not cover {} portfolio states",
            labeling.n_states()
        )));
    }
    let rows = (0..labeling.grid.len())
        .map(|w| {
            (0..labeling.n_conditions)
                .map(|e| labeling.grid[policy[labeling.index(StateLabel { market_condition: e, weight_index: w })]])
                .collect()
        })
        .collect();
    Ok(PolicyMatrix { weights: labeling.grid.clone(), rows })
}
