//! Meta-learning of Hamiltonian neural networks.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod metalearn;
pub mod network;
pub mod physics;
pub mod taskgen;

pub use error::{Error, Result};

/// Package version plus `git describe` of the source tree when available.
pub const VERSION: &str = env!("HAMLEARN_VERSION");
