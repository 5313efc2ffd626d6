pub mod baselines;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod mcts;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod rng;
pub mod server;
pub mod session;
pub mod simulation;

pub use error::{Error, Result};
