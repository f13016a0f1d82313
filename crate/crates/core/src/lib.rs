pub mod copula;
pub mod dist;
mod error;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod marginal;
pub mod seed;
pub mod simulate;
pub mod study;

pub use error::{Error, Result};
