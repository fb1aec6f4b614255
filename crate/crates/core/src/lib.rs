//! A simulation lab for excess-risk rates in causal and anti-causal domain
//! adaptation.
//!
//! The crate builds discrete potential-outcome models ([`models`]), trains
//! plug-in ([`estimators`]) and Bayesian mixture ([`bayes`]) predictors under
//! the eight source/target shift scenarios, measures their excess log-loss by
//! Monte-Carlo ([`risk`]) and by exhaustive enumeration ([`oracle`]), and
//! compares the measured curves ([`rates`]) with constants derived from
//! Fisher information ([`fisher`]).

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bayes;
pub mod cli;
pub mod estimators;
pub mod fisher;
mod golden;
pub mod models;
pub mod oracle;
pub mod par;
pub mod rates;
pub mod risk;
pub mod seed;

pub use golden::maximize as golden_maximize;
pub use models::{Direction, DomainPair, Params, Scenario, ScenarioName};
pub use par::ExecMode;
