//! Bayesian inference for the Extended Plackett-Luce ranking model with a
//! top-or-bottom constrained reference order.
//!
//! The crate is organized bottom-up:
//!
//! - [`perm`]: orderings, rankings, and the constrained reference-order space;
//! - [`model`]: EPL probabilities, simulation and likelihoods;
//! - [`sampler`]: the tuned joint Metropolis-within-Gibbs posterior sampler;
//! - [`diagnostics`]: posterior summaries, Kendall distances, traces and the
//!   joint-distribution correctness test;
//! - [`experiments`]: synthetic data, the recovery study and an exact
//!   small-instance posterior oracle;
//! - [`io`]: dataset loading and result files.

pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod perm;
pub mod sampler;

pub use error::{Error, Result};
