//! Simulation and gradient estimation for stochastic activity, reliability
//! and queueing networks.
//!
//! Sample performance functions of all three network classes are
//! compositions of `max`, `min` and `+` over primitive random durations.
//! This crate builds those networks, simulates them from explicit uniform
//! streams, computes single-run infinitesimal perturbation analysis (IPA)
//! gradients, checks the sufficient conditions under which those gradients
//! are unbiased, and compares them against finite-difference estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cli;
pub mod config;
mod error;
pub mod estimators;
pub mod ipa;
pub mod model;
pub mod networks;
pub mod optimize;
pub mod variates;

pub use error::{Error, Result};
