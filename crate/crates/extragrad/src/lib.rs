//! Solvers for monotone and locally regular variational inequalities built on
//! extra-gradient iterations, including the single-call variants that reuse
//! past operator feedback, with reproducible stochastic oracles, merit
//! functions and a benchmark problem zoo.

pub mod algorithm;
pub mod config;
pub mod error;
pub mod merit;
pub mod oracle;
pub mod problems;
pub mod schedule;
pub mod verify;
pub mod vi;

pub use error::{Error, Result};
