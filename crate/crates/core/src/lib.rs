//! Evolutionary solution search over verifiable math tasks, guided by a
//! bandit planner over outcome metrics and a procedure-level factor ledger,
//! plus Monte-Carlo simulations of the underlying sample-complexity results.

pub mod archive;
pub mod engine;
pub mod error;
pub mod factor_ledger;
pub mod gateway;
pub mod outcome_factors;
pub mod planner;
pub mod tasks;
pub mod theory_sim;

pub use error::{Error, Result};
