pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
