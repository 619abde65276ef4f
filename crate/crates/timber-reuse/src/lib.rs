//! Reuse grading for moisture-exposed engineered timber.
//!
//! The pipeline: flexural-test records come in as CSV, each specimen gets a
//! residual-performance score `R` against its unexposed controls, a
//! three-class Bayesian logit with horseshoe priors is fit by a built-in
//! No-U-Turn sampler (jointly inferring the lower reuse threshold), and the
//! posterior feeds convergence diagnostics, classification scoring, and a
//! three-way field triage rule.
//!
//! See the `examples/` directory for one runnable program per capability;
//! the `timber-reuse` binary wraps the same calls behind subcommands.

pub mod data;
pub mod error;
pub mod grading;
pub mod model;
pub mod sampler;

pub use error::{Error, Result};
