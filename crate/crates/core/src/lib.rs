//! Neuroevolution of generalist controllers that stay robust across agent
//! morphologies.
//!
//! - [`net`]: fixed-topology tanh networks over flat parameter vectors
//! - [`xnes`]: exponential natural evolution strategies (ask/tell)
//! - [`envs`]: morphology-parameterized environments (cart-pole, synthetic)
//! - [`schedule`]: morphology lattices and training schedules
//! - [`generalist`]: the evolutionary loop with outlier removal and branching
//! - [`metrics`]: default / local / global test sets and fitness sweeps
//! - [`stats`]: Kruskal-Wallis and Dunn's post hoc test
//! - [`seed`]: splitmix-based seed derivation

pub mod envs;
pub mod error;
pub mod generalist;
pub mod metrics;
pub mod net;
pub mod schedule;
pub mod seed;
pub mod stats;
pub mod xnes;

pub use error::{Error, Result};
