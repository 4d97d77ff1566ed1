pub mod arch;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod search;
pub mod seed;
pub mod stats;
pub mod tensor;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
