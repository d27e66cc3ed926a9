//! skewinfo: density evaluation, exact sampling, Fisher information, and
//! information-singularity diagnostics for skew-symmetric distribution
//! families built from a centrally symmetric kernel and a skewing function.

pub mod density;
pub mod error;
pub mod expmatch;
pub mod fisher;
pub mod mle;
pub mod exec;
pub mod models;
pub mod quad;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
