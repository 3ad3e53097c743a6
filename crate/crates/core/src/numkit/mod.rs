//! Dense matrices, a reverse-mode tape, Adam, and checkpoint encoding.

mod checkpoint;
mod linear;
mod optim;
mod params;
mod sparse;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use linear::Linear;
pub use optim::{AdamConfig, OptimizerState};
pub use params::{ParamId, ParamStore};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
