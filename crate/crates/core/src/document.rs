//! Serializable file schemas for models and policies.
//!
//! A model document:
//!
//! ```json
//! {
//!   "n_states": 2,
//!   "n_actions": 1,
//!   "transition": [[0.9, 0.1], [0.5, 0.5]],
//!   "cost": [[0.0], [6.0]]
//! }
//! ```
//!
//! `transition` holds `n_states * n_actions` rows (row `i * n_actions + a` is
//! `p(· | i, a)`), `cost` holds `n_states` rows of `n_actions` values.
//! Instead of `cost`, a model may give `transition_cost` with the same layout
//! as `transition` for costs that depend on the successor state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostTable, MdpModel, Policy, StateActionCosts};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument<T> {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Vec<Vec<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_cost: Option<Vec<Vec<T>>>,
}

fn check_rows<T>(rows: &[Vec<T>], n_rows: usize, width: usize, what: &str) -> Result<()> {
    if rows.len() != n_rows {
        return Err(Error::DimensionMismatch(format!("{what} has {} rows, expected {n_rows}", rows.len())));
    }
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != width) {
        return Err(Error::DimensionMismatch(format!("{what} row {r} has {} entries, expected {width}", row.len())));
    }
    Ok(())
}

impl<T: Scalar> ModelDocument<T> {
    /// Builds the model checking shapes only; run `validate_model` on the result.
    pub fn to_model_unchecked(&self) -> Result<MdpModel<T>> {
        let (s, a) = (self.n_states, self.n_actions);
        check_rows(&self.transition, s * a, s, "transition")?;
        let cost = match (&self.cost, &self.transition_cost) {
            (Some(c), None) => {
                check_rows(c, s, a, "cost")?;
                CostTable::StateAction(StateActionCosts::from_rows(c)?)
            }
            (None, Some(c)) => {
                check_rows(c, s * a, s, "transition_cost")?;
                CostTable::Transition(c.concat())
            }
            _ => {
                return Err(Error::InvalidParameter("exactly one of `cost` and `transition_cost` must be given".into()))
            }
        };
        MdpModel::from_raw(s, a, self.transition.concat(), cost)
    }

    pub fn to_model(&self) -> Result<MdpModel<T>> {
        let m = self.to_model_unchecked()?;
        MdpModel::new(m.n_states(), m.n_actions(), m.transition().to_vec(), m.cost_table().clone())
    }

    pub fn from_model(model: &MdpModel<T>) -> Self {
        let (s, a) = (model.n_states(), model.n_actions());
        let transition = model.transition().chunks(s).map(<[T]>::to_vec).collect();
        let (cost, transition_cost) = match model.cost_table() {
            CostTable::StateAction(c) => (Some(c.to_rows()), None),
            CostTable::Transition(c) => (None, Some(c.chunks(s).map(<[T]>::to_vec).collect())),
        };
        Self { n_states: s, n_actions: a, transition, cost, transition_cost }
    }
}

/// A deterministic policy file: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyDocument(pub Vec<usize>);

impl PolicyDocument {
    pub fn to_policy<T: Scalar>(&self) -> Policy<T> {
        Policy::Deterministic(self.0.clone())
    }
}
