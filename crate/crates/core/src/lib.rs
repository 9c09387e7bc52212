//! Hard parametrized non-convex function families, a coin-tossing stochastic
//! first-order oracle, and executable versions of the information-theoretic
//! machinery that lower-bounds how many oracle queries any first-order method
//! needs to locate a global minimizer.
//!
//! Module map:
//!
//! * [`geometry`] – hypercube corners, sign vectors, Hamming packings.
//! * [`instance`] – the bump family `g_α(x | θ)`, its subgradients and exact minimum.
//! * [`oracle`] – the coin-tossing oracle, transcripts and their two views.
//! * [`discrepancy`] – the discrepancy premetric ρ, brute-force Ψ and the uniqueness check.
//! * [`identify`] – optimization error, threshold test, ML identification, empirical risk.
//! * [`bounds`] – KL / Fano / mutual-information calculators and the query lower bound.
//! * [`harness`] – optimizer zoo, reconstruction policies, success curves.
//! * [`cli`] – the `ncvx` command-line front end.

pub mod bounds;
pub mod cli;
pub mod discrepancy;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod identify;
pub mod instance;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
