//! Per-source pair encoders and the comprehensive pair feature.

mod cnn;
mod transformer;

pub use cnn::{pair_positions, CnnBlock, CnnConfig};
pub use transformer::{Attention, AttentionOutput, EncoderBlock, EncoderConfig};

use crate::error::{Error, Result};
use crate::numkit::{Tape, Var};

/// Encoded sources of one batch, each `K × width`.
#[derive(Clone, Copy, Debug)]
pub struct SourceEncodings {
    pub smiles: Var,
    pub embedding: Var,
    pub targets: Var,
    pub enzymes: Var,
    pub substructures: Var,
}

/// Concatenation in the fixed order smiles, embedding, targets, enzymes,
/// substructures.
pub fn assemble_comprehensive(tape: &Tape, enc: &SourceEncodings) -> Result<Var> {
    let parts = [
        enc.smiles,
        enc.embedding,
        enc.targets,
        enc.enzymes,
        enc.substructures,
    ];
    if parts.iter().any(|p| p.rows() != parts[0].rows()) {
        return Err(Error::shape(
            "assemble_comprehensive",
            "source batch sizes differ",
        ));
    }
    tape.concat_cols(&parts)
}
