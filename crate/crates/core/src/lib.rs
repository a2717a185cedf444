//! Penalized functional regression for longitudinal data with
//! decomposition-based penalties.

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod gsvd_oracle;
pub mod linalg;
pub mod penalty;
pub mod selection;
mod serde_util;
pub mod simulate;

pub use error::{Error, ErrorCategory, Result};
