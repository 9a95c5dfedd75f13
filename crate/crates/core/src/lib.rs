//! Information-theoretic analysis of CNN training runs.
//!
//! A run's dumped activations form a hypercube indexed by sample, layer,
//! channel and epoch. [`store`] loads and slices it; [`entropy`] holds the
//! estimators; [`flow`], [`perf`] and [`deconv`] build the layer, output and
//! channel-level analyses on top.

pub mod deconv;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod npy;
pub mod perf;
pub mod render;
pub mod store;

pub use error::{Error, Result};
