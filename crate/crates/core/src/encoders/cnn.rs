//! 1-D convolution over concatenated SMILES one-hot matrices.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{SmilesMatrix, SMILES_CLASSES, SMILES_LENGTH};
use crate::numkit::{Linear, ParamStore, SparseMatrix, Tape, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            channels: vec![32, 64, 96],
            kernels: vec![4, 6, 8],
        }
    }
}

impl CnnConfig {
    pub fn validate(&self, positions: usize) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.kernels.len() {
            return Err(Error::Param(format!(
                "cnn needs matching non-empty channel and kernel lists, got {} and {}",
                self.channels.len(),
                self.kernels.len()
            )));
        }
        if self.channels.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::Param(
                "cnn channels and kernels must be positive".into(),
            ));
        }
        let shrink: usize = self.kernels.iter().map(|k| k - 1).sum();
        if shrink >= positions {
            return Err(Error::Param(format!(
                "kernels {:?} leave no positions out of {positions}",
                self.kernels
            )));
        }
        Ok(())
    }
}

/// Convolution stages, global max pool and projection to `d_out`.
#[derive(Clone, Debug)]
pub struct CnnBlock {
    stages: Vec<Linear>,
    kernels: Vec<usize>,
    proj: Linear,
}

/// Per-position character class of `S_u ‖ S_v`; `None` is a zero column.
pub fn pair_positions(u: &SmilesMatrix, v: &SmilesMatrix) -> Vec<Option<u8>> {
    (0..SMILES_LENGTH)
        .map(|p| u.class_at(p))
        .chain((0..SMILES_LENGTH).map(|p| v.class_at(p)))
        .collect()
}

impl CnnBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: &CnnConfig,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate(2 * SMILES_LENGTH)?;
        let mut c_in = SMILES_CLASSES;
        let mut stages = Vec::with_capacity(config.channels.len());
        for (i, (&c, &k)) in config.channels.iter().zip(&config.kernels).enumerate() {
            stages.push(Linear::new(
                store,
                &format!("{name}.conv{i}"),
                k * c_in,
                c,
                true,
                rng,
            ));
            c_in = c;
        }
        let proj = Linear::new(store, &format!("{name}.proj"), c_in, d_out, true, rng);
        Ok(CnnBlock {
            stages,
            kernels: config.kernels.clone(),
            proj,
        })
    }

    pub fn d_out(&self) -> usize {
        self.proj.d_out
    }

    /// Encodes each pair of SMILES matrices to one `1 × d_out` row.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        pairs: &[(&SmilesMatrix, &SmilesMatrix)],
    ) -> Result<Var> {
        let seqs: Vec<Vec<Option<u8>>> = pairs.iter().map(|(u, v)| pair_positions(u, v)).collect();
        self.forward_positions(tape, store, &seqs)
    }

    /// Same as [`CnnBlock::forward`] over explicit per-position classes; all
    /// sequences must share one length.
    pub fn forward_positions(
        &self,
        tape: &Tape,
        store: &ParamStore,
        seqs: &[Vec<Option<u8>>],
    ) -> Result<Var> {
        let len = seqs.first().map_or(0, Vec::len);
        if seqs.is_empty() || seqs.iter().any(|s| s.len() != len) {
            return Err(Error::shape(
                "cnn",
                "sequences must be non-empty and equal length",
            ));
        }
        let shrink: usize = self.kernels.iter().map(|k| k - 1).sum();
        if shrink >= len {
            return Err(Error::shape(
                "cnn",
                format!("sequence length {len} too short"),
            ));
        }
        // The one-hot input is constant, so the first window matrix is built
        // directly in sparse form.
        let k0 = self.kernels[0];
        let windows = len - k0 + 1;
        let mut rows = Vec::with_capacity(seqs.len() * windows);
        for seq in seqs {
            for p in 0..windows {
                let row: Vec<(usize, f64)> = (0..k0)
                    .filter_map(|o| seq[p + o].map(|c| (o * SMILES_CLASSES + c as usize, 1.0)))
                    .collect();
                rows.push(row);
            }
        }
        let first = Arc::new(SparseMatrix::from_row_entries(k0 * SMILES_CLASSES, &rows));
        let w0 = tape.param(store, self.stages[0].weight);
        let mut h = tape.sparse_matmul(&first, w0)?;
        if let Some(b) = self.stages[0].bias {
            h = tape.add_row(h, tape.param(store, b))?;
        }
        h = tape.relu(h)?;
        let mut block = windows;
        for (stage, &k) in self.stages.iter().zip(&self.kernels).skip(1) {
            let cols = tape.im2col(h, block, k)?;
            block = block - k + 1;
            h = tape.relu(stage.forward(tape, store, cols)?)?;
        }
        let pooled = tape.block_max_rows(h, block)?;
        self.proj.forward(tape, store, pooled)
    }
}
