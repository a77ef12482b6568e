pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod objective;
pub mod optim;
pub mod schedule;
pub mod snapshot;
pub mod sparsity;
pub mod trainer;

pub use error::{Error, Result};
