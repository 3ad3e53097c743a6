//! Drug-drug interaction event prediction with relation-aware graph
//! embeddings, multi-source pair encoders and multi-view differentiable
//! spectral clustering, on a small reverse-mode autodiff engine.

// Dense index loops mirror the formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod encoders;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod graphcore;
pub mod model;
pub mod mvdsc;
pub mod numkit;

pub use error::{Error, Result};

#[cfg(test)]
mod testutil;
