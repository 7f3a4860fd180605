pub mod cli;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod synthdata;
pub mod train;

pub use error::{Error, ErrorCategory, Result};
