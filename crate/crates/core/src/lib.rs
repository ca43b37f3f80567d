pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nncore;
pub mod pipeline;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};
