//! Workbench for the graph of ordered pairs: its adic and dyadic dynamics,
//! the coding onto symbolic spaces, invariant-measure samplers, and
//! scaled-entropy estimators for actions and dyadic filtrations.

pub mod cli;
pub mod coding;
pub mod dyadic_group;
pub mod error;
pub mod filtration;
pub mod graph_op;
pub mod measures;
pub mod metrics_entropy;

pub use error::{Error, Result};
