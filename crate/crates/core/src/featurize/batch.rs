use super::{
    build_initial_features, encode_smiles, Attribute, DrugTable, SimilarityFeatures, SmilesMatrix,
};
use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Per-drug inputs shared by every batch of a dataset.
#[derive(Clone, Debug)]
pub struct PairInputs {
    pub features: SimilarityFeatures,
    pub smiles: Vec<SmilesMatrix>,
    /// Binary attribute matrices in target, enzyme, substructure order.
    pub binary: [Tensor; 3],
}

impl PairInputs {
    pub fn new(table: &DrugTable) -> Result<Self> {
        let features = build_initial_features(table)?;
        let smiles = table
            .drugs()
            .iter()
            .map(|d| encode_smiles(&d.smiles))
            .collect();
        let binary = Attribute::ALL.map(|a| table.binary_matrix(a));
        Ok(PairInputs {
            features,
            smiles,
            binary,
        })
    }

    pub fn num_drugs(&self) -> usize {
        self.smiles.len()
    }

    /// Assembles the static inputs of `pairs`. Labels, when given, are event
    /// indices below `num_events`.
    pub fn batch(
        &self,
        pairs: &[(usize, usize)],
        labels: Option<&[usize]>,
        num_events: usize,
    ) -> Result<PairBatch> {
        let n = self.num_drugs();
        for &(u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "pair ({u}, {v}) out of range for {n} drugs"
                )));
            }
            if u == v {
                return Err(Error::Validation(format!("self-pair ({u}, {u})")));
            }
        }
        let k = pairs.len();
        let labels = match labels {
            Some(l) => {
                if l.len() != k {
                    return Err(Error::Validation(format!(
                        "{} labels for {k} pairs",
                        l.len()
                    )));
                }
                let mut y = Tensor::zeros(k, num_events);
                for (i, &e) in l.iter().enumerate() {
                    if e >= num_events {
                        return Err(Error::Validation(format!(
                            "event {e} out of range for {num_events} events"
                        )));
                    }
                    y.set(i, e, 1.0);
                }
                Some(y)
            }
            None => None,
        };
        let stacked = |m: &Tensor| {
            let (rows, w) = (pairs.len(), m.cols());
            let mut out = Vec::with_capacity(rows * 2 * w);
            for &(u, v) in pairs {
                out.extend_from_slice(m.row(u));
                out.extend_from_slice(m.row(v));
            }
            Tensor::from_vec(rows, 2 * w, out)
        };
        let summed = |m: &Tensor| {
            let w = m.cols();
            let mut out = Vec::with_capacity(pairs.len() * w);
            for &(u, v) in pairs {
                out.extend(m.row(u).iter().zip(m.row(v)).map(|(a, b)| a + b));
            }
            Tensor::from_vec(pairs.len(), w, out)
        };
        let f = &self.features;
        Ok(PairBatch {
            pairs: pairs.to_vec(),
            smiles: pairs
                .iter()
                .map(|&(u, v)| (self.smiles[u].clone(), self.smiles[v].clone()))
                .collect(),
            similarity: [
                stacked(&f.targets)?,
                stacked(&f.enzymes)?,
                stacked(&f.substructures)?,
            ],
            summed: [
                summed(&self.binary[0])?,
                summed(&self.binary[1])?,
                summed(&self.binary[2])?,
            ],
            labels,
        })
    }
}

/// Static inputs of `K` ordered pairs `(u, v)`; every block concatenates
/// `u` before `v`.
#[derive(Clone, Debug)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize)>,
    pub smiles: Vec<(SmilesMatrix, SmilesMatrix)>,
    /// `a_u ‖ a_v` similarity rows per attribute, each `K × 2N`.
    pub similarity: [Tensor; 3],
    /// Summed binary sequences per attribute, entries in `{0, 1, 2}`.
    pub summed: [Tensor; 3],
    /// One-hot event rows, `K × R`.
    pub labels: Option<Tensor>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
