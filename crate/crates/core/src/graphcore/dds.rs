//! Drug-similarity graph and propagation of structure embeddings over it.

use super::normalize_adjacency;
use crate::error::{Error, Result};
use crate::featurize::{Attribute, SimilarityFeatures};
use crate::numkit::{Tape, Tensor, Var};

/// Keeps the `k` largest entries of every row, then restores symmetry by
/// keeping an entry when either endpoint kept it. Ties break toward the
/// lower column index.
pub fn sparsify_top_k(a: &Tensor, k: usize) -> Tensor {
    let n = a.rows();
    let mut keep = vec![false; n * n];
    for u in 0..n {
        let mut order: Vec<usize> = (0..a.cols()).collect();
        order.sort_by(|&i, &j| a.get(u, j).total_cmp(&a.get(u, i)).then(i.cmp(&j)));
        for &v in order.iter().take(k) {
            keep[u * n + v] = true;
            keep[v * n + u] = true;
        }
    }
    let mut out = Tensor::zeros(n, n);
    for u in 0..n {
        for v in 0..n {
            if keep[u * n + v] {
                out.set(u, v, a.get(u, v));
            }
        }
    }
    out
}

/// Similarity graphs for targets, enzymes and substructures with their
/// normalized forms.
#[derive(Clone, Debug)]
pub struct DdsGraph {
    raw: [Tensor; 3],
    normalized: [Tensor; 3],
}

impl DdsGraph {
    pub fn new(features: &SimilarityFeatures, top_k: Option<usize>) -> Result<Self> {
        let raw = Attribute::ALL.map(|attr| {
            let m = features.get(attr);
            match top_k {
                Some(k) => sparsify_top_k(m, k),
                None => m.clone(),
            }
        });
        let normalized = [
            normalize_adjacency(&raw[0])?,
            normalize_adjacency(&raw[1])?,
            normalize_adjacency(&raw[2])?,
        ];
        Ok(DdsGraph { raw, normalized })
    }

    pub fn num_nodes(&self) -> usize {
        self.raw[0].rows()
    }

    pub fn similarity(&self, attr: Attribute) -> &Tensor {
        &self.raw[attr as usize]
    }

    pub fn normalized(&self, attr: Attribute) -> &Tensor {
        &self.normalized[attr as usize]
    }

    /// Precomputes `Â_c^L` for each channel.
    pub fn propagator(&self, hops: usize) -> DdsPropagator {
        if hops == 0 {
            return DdsPropagator { powers: None };
        }
        let powers = self.normalized.clone().map(|a| {
            let mut p = a.clone();
            for _ in 1..hops {
                p = a.matmul(&p).expect("square operands");
            }
            p
        });
        DdsPropagator {
            powers: Some(powers),
        }
    }
}

/// `L`-hop propagation operators; `None` means zero hops.
#[derive(Clone, Debug)]
pub struct DdsPropagator {
    powers: Option<[Tensor; 3]>,
}

impl DdsPropagator {
    pub fn hops_are_zero(&self) -> bool {
        self.powers.is_none()
    }

    /// Channel outputs in target, enzyme, substructure order.
    pub fn apply(&self, tape: &Tape, xbar: Var) -> Result<[Var; 3]> {
        let Some(powers) = &self.powers else {
            return Ok([xbar; 3]);
        };
        if powers[0].cols() != xbar.rows() {
            return Err(Error::shape(
                "dds_propagate",
                format!(
                    "{} embedding rows for {} nodes",
                    xbar.rows(),
                    powers[0].cols()
                ),
            ));
        }
        let mut out = [xbar; 3];
        for (slot, p) in out.iter_mut().zip(powers) {
            let c = tape.constant(p.clone());
            *slot = tape.matmul(c, xbar)?;
        }
        Ok(out)
    }
}

/// `x_c^{(l)} = Â_c x_c^{(l-1)}` from `x_c^{(0)} = x̄`, for each channel.
pub fn dds_propagate(tape: &Tape, dds: &DdsGraph, xbar: Var, hops: usize) -> Result<[Var; 3]> {
    dds.propagator(hops).apply(tape, xbar)
}

/// `relu(x_t W_t + x_e W_e + x_s W_s)`.
pub fn fuse_ragse(tape: &Tape, channels: [Var; 3], weights: [Var; 3]) -> Result<Var> {
    let mut acc = tape.matmul(channels[0], weights[0])?;
    for c in 1..3 {
        let term = tape.matmul(channels[c], weights[c])?;
        acc = tape.add(acc, term)?;
    }
    tape.relu(acc)
}
