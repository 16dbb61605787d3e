//! Non-Bayesian time-varying VAR estimation and the time-varying degree of
//! market efficiency, with the supporting unit-root, lag-selection and
//! parameter-constancy tests.

pub mod cli;
pub mod dataio;
pub mod efficiency;
pub mod error;
mod linalg;
pub mod sim;
pub mod tvvar;
pub mod unitroot;
pub mod var;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
