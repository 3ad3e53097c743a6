//! Drug attributes, cosine-similarity features and pair attribute sequences.

mod batch;
mod io;
mod smiles;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use batch::{PairBatch, PairInputs};
pub use io::{
    format_drug_table, parse_drug_table, read_drug_table, write_drug_table, DRUG_TABLE_HEADER,
};
pub use smiles::{
    char_class, encode_smiles, SmilesMatrix, SMILES_CLASSES, SMILES_LENGTH, SMILES_VOCAB_V1,
    UNKNOWN_CLASS,
};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// The three descriptor families used by the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Attribute {
    Target,
    Enzyme,
    Substructure,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [
        Attribute::Target,
        Attribute::Enzyme,
        Attribute::Substructure,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorSizes {
    pub targets: usize,
    pub enzymes: usize,
    pub substructures: usize,
}

impl DescriptorSizes {
    pub fn get(&self, attr: Attribute) -> usize {
        match attr {
            Attribute::Target => self.targets,
            Attribute::Enzyme => self.enzymes,
            Attribute::Substructure => self.substructures,
        }
    }
}

/// One drug; descriptor sets are sorted, deduplicated indices of the 1
/// entries of each binary sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Drug {
    pub id: String,
    pub smiles: String,
    pub targets: Vec<usize>,
    pub enzymes: Vec<usize>,
    pub substructures: Vec<usize>,
}

impl Drug {
    pub fn descriptors(&self, attr: Attribute) -> &[usize] {
        match attr {
            Attribute::Target => &self.targets,
            Attribute::Enzyme => &self.enzymes,
            Attribute::Substructure => &self.substructures,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DrugTable {
    sizes: DescriptorSizes,
    drugs: Vec<Drug>,
    index: HashMap<String, usize>,
}

impl DrugTable {
    pub fn new(sizes: DescriptorSizes, mut drugs: Vec<Drug>) -> Result<Self> {
        let mut index = HashMap::with_capacity(drugs.len());
        for (i, d) in drugs.iter_mut().enumerate() {
            if d.id.is_empty() || d.id.contains(char::is_whitespace) {
                return Err(Error::Validation(format!("invalid drug id `{}`", d.id)));
            }
            if index.insert(d.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate drug id `{}`", d.id)));
            }
            for attr in Attribute::ALL {
                let set = match attr {
                    Attribute::Target => &mut d.targets,
                    Attribute::Enzyme => &mut d.enzymes,
                    Attribute::Substructure => &mut d.substructures,
                };
                set.sort_unstable();
                set.dedup();
                if let Some(&bad) = set.iter().find(|&&x| x >= sizes.get(attr)) {
                    return Err(Error::Validation(format!(
                        "drug `{}`: {attr:?} descriptor {bad} outside universe of {}",
                        d.id,
                        sizes.get(attr)
                    )));
                }
            }
        }
        Ok(DrugTable {
            sizes,
            drugs,
            index,
        })
    }

    pub fn sizes(&self) -> DescriptorSizes {
        self.sizes
    }

    pub fn len(&self) -> usize {
        self.drugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drugs.is_empty()
    }

    pub fn drugs(&self) -> &[Drug] {
        &self.drugs
    }

    pub fn drug(&self, i: usize) -> &Drug {
        &self.drugs[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownDrug(id.to_string()))
    }

    /// Dense binary sequence of one drug.
    pub fn binary(&self, drug: usize, attr: Attribute) -> Vec<f64> {
        let mut v = vec![0.0; self.sizes.get(attr)];
        for &i in self.drugs[drug].descriptors(attr) {
            v[i] = 1.0;
        }
        v
    }

    /// `N × |universe|` binary matrix of one attribute.
    pub fn binary_matrix(&self, attr: Attribute) -> Tensor {
        let width = self.sizes.get(attr);
        let mut t = Tensor::zeros(self.len(), width);
        for (r, d) in self.drugs.iter().enumerate() {
            for &i in d.descriptors(attr) {
                t.set(r, i, 1.0);
            }
        }
        t
    }
}

/// `M[u][v] = c·d / (‖c‖‖d‖)`, clamped to at most 1, with an exact unit
/// diagonal. Rows of all-zero vectors are zero everywhere, diagonal included.
pub fn cosine_similarity_matrix<S: AsRef<[f64]>>(seqs: &[S]) -> Result<Tensor> {
    let n = seqs.len();
    if n == 0 {
        return Err(Error::Validation(
            "cosine similarity of an empty set".into(),
        ));
    }
    let len = seqs[0].as_ref().len();
    if let Some(i) = seqs.iter().position(|s| s.as_ref().len() != len) {
        return Err(Error::Validation(format!(
            "sequence {i} has length {}, expected {len}",
            seqs[i].as_ref().len()
        )));
    }
    let norms: Vec<f64> = seqs
        .iter()
        .map(|s| s.as_ref().iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut m = Tensor::zeros(n, n);
    for u in 0..n {
        if norms[u] == 0.0 {
            continue;
        }
        m.set(u, u, 1.0);
        for v in u + 1..n {
            if norms[v] == 0.0 {
                continue;
            }
            let dot: f64 = seqs[u]
                .as_ref()
                .iter()
                .zip(seqs[v].as_ref())
                .map(|(a, b)| a * b)
                .sum();
            let s = (dot / (norms[u] * norms[v])).min(1.0);
            m.set(u, v, s);
            m.set(v, u, s);
        }
    }
    Ok(m)
}

/// Similarity matrices of the three attributes and the initial feature
/// matrix `X = [A_t ‖ A_e ‖ A_s]` (`N × 3N`).
#[derive(Clone, Debug)]
pub struct SimilarityFeatures {
    pub targets: Tensor,
    pub enzymes: Tensor,
    pub substructures: Tensor,
    pub initial: Tensor,
}

impl SimilarityFeatures {
    pub fn get(&self, attr: Attribute) -> &Tensor {
        match attr {
            Attribute::Target => &self.targets,
            Attribute::Enzyme => &self.enzymes,
            Attribute::Substructure => &self.substructures,
        }
    }
}

pub fn build_initial_features(table: &DrugTable) -> Result<SimilarityFeatures> {
    let sim = |attr| {
        let rows: Vec<Vec<f64>> = (0..table.len()).map(|i| table.binary(i, attr)).collect();
        cosine_similarity_matrix(&rows)
    };
    let targets = sim(Attribute::Target)?;
    let enzymes = sim(Attribute::Enzyme)?;
    let substructures = sim(Attribute::Substructure)?;
    let initial = Tensor::concat_cols(&[&targets, &enzymes, &substructures])?;
    Ok(SimilarityFeatures {
        targets,
        enzymes,
        substructures,
        initial,
    })
}

/// Elementwise sum of two binary sequences (entries in `{0, 1, 2}`).
pub fn pair_attribute_sequence(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "attribute sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}
