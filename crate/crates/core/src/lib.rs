pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod math;
pub mod model;
pub mod tracker;
pub mod training;

pub use error::{Error, Result};
