//! Multilingual topic models that share knowledge through transfer
//! operations on Dirichlet priors.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod sampler;
pub mod synthetic;
pub mod transfer;

pub use error::{Error, Result};
