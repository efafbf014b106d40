//! Two-stage Bayesian hierarchical projection of state-level sex ratios at
//! birth (SRB): a desired-SRB model feeds an AR(1) + RW2 model for the SRB,
//! whose posterior trajectories drive missing-female-birth estimates.

pub mod derived;
pub mod dsrb;
pub mod error;
pub mod ingest;
pub mod jackknife;
pub mod mcmc;
pub mod priors;
pub mod srb;
pub mod stats;
pub mod synth;
pub mod trajectory;
pub mod validation;

pub use error::{Error, Result};
