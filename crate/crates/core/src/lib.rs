pub mod classifier;
pub mod data;
pub mod dp;
pub mod error;
pub mod fairness;
pub mod marginals;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
