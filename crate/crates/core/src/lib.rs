pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod network;
pub mod numerics;
pub mod optimizer;
pub mod transducer;

pub use error::{Error, Result};
