//! Long-run CVaR optimization of finite Markov decision processes.
//!
//! The crate evaluates the steady-state VaR/CVaR of stationary policies and
//! optimizes it with a policy-iteration-type algorithm built on the pseudo-CVaR
//! cost `y + (c - y)^+ / (1 - α)` and the potentials of the induced chain:
//!
//! * [`mdp`]: models, policies, induced chains;
//! * [`chain`]: ergodicity, stationary laws, Poisson-equation potentials;
//! * [`risk`]: loss laws, VaR, CVaR, pseudo-CVaR, difference and derivative formulas;
//! * [`optimize`]: local CVaR / mean-CVaR solvers, the global oracle, multi-start, CVaR maximization;
//! * [`portfolio`]: the regime-switching two-asset portfolio scenario.
//!
//! Everything numeric is generic over [`Scalar`] (`f32`/`f64`); the `f64`
//! aliases below cover the common case.

// `!(x > 0)` style checks are kept so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod document;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod optimize;
pub mod portfolio;
pub mod risk;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mdp = mdp::MdpModel<f64>;
pub type Policy = mdp::Policy<f64>;
pub type RiskParams = risk::RiskParams<f64>;
pub type EvaluationReport = risk::EvaluationReport<f64>;
pub type SolveResult = optimize::SolveResult<f64>;
pub type GlobalSolveResult = optimize::GlobalSolveResult<f64>;
pub type MaxSolveResult = optimize::MaxSolveResult<f64>;
pub type MultiStartResult = optimize::MultiStartResult<f64>;
pub type PortfolioConfig = portfolio::PortfolioConfig<f64>;
pub type ModelDocument = document::ModelDocument<f64>;
