//! Multi-relational DDI graph, similarity graph, relational convolution and
//! embedding propagation.

mod dds;
mod io;
mod rgcn;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dds::{dds_propagate, fuse_ragse, sparsify_top_k, DdsGraph, DdsPropagator};
pub use io::{format_ddi_triples, parse_ddi_triples, read_ddi_triples, write_ddi_triples};
pub use rgcn::{rgcn_forward, rgcn_layer, RgcnLayer};

use crate::error::{Error, Result};
use crate::numkit::{SparseMatrix, Tensor};

/// Ordered drug pair `(a, b)` with its event type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DdiRecord {
    pub a: usize,
    pub b: usize,
    pub event: usize,
}

/// Validated interaction list: no self-pairs, each unordered pair at most
/// once, event types exactly `0..num_events`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DdiSet {
    records: Vec<DdiRecord>,
    num_events: usize,
}

impl DdiSet {
    pub fn new(records: Vec<DdiRecord>, num_drugs: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut events = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.a >= num_drugs || r.b >= num_drugs {
                return Err(Error::Validation(format!(
                    "record {i}: drug index out of range"
                )));
            }
            if r.a == r.b {
                return Err(Error::Validation(format!(
                    "record {i}: drug paired with itself"
                )));
            }
            if !seen.insert((r.a.min(r.b), r.a.max(r.b))) {
                return Err(Error::Validation(format!(
                    "record {i}: duplicate drug pair"
                )));
            }
            events.insert(r.event);
        }
        let num_events = events.len();
        if let Some(gap) = (0..num_events).find(|e| !events.contains(e)) {
            return Err(Error::Validation(format!(
                "event types must be contiguous from 0; type {gap} is missing"
            )));
        }
        Ok(DdiSet {
            records,
            num_events,
        })
    }

    pub fn records(&self) -> &[DdiRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.num_events
    }
}

/// `D^{-1/2} A D^{-1/2}` with `D = diag(A·1)`; zero-degree rows and columns
/// stay zero.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(
            "normalize_adjacency",
            format!("{:?} is not square", a.shape()),
        ));
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::Validation(
            "adjacency matrix is not symmetric".into(),
        ));
    }
    if a.data().iter().any(|&v| v < 0.0) {
        return Err(Error::Validation(
            "adjacency matrix has negative entries".into(),
        ));
    }
    let inv_sqrt: Vec<f64> = a
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut out = Tensor::zeros(n, n);
    for u in 0..n {
        for v in 0..n {
            let x = a.get(u, v);
            if x != 0.0 {
                out.set(u, v, inv_sqrt[u] * x * inv_sqrt[v]);
            }
        }
    }
    Ok(out)
}

/// DDI graph with one binary symmetric adjacency per event type.
#[derive(Clone, Debug)]
pub struct RelGraph {
    num_nodes: usize,
    /// `neighbors[r][v]`, sorted.
    neighbors: Vec<Vec<Vec<usize>>>,
    participation: Vec<usize>,
    /// `diag(1/R_v) · Â_r`, the per-relation aggregation operator.
    aggregation: Vec<Arc<SparseMatrix>>,
}

impl RelGraph {
    /// Builds the graph from the given records only; callers pass the
    /// training fold.
    pub fn new(num_nodes: usize, num_relations: usize, records: &[DdiRecord]) -> Result<Self> {
        let mut neighbors = vec![vec![Vec::new(); num_nodes]; num_relations];
        for r in records {
            if r.event >= num_relations {
                return Err(Error::Validation(format!(
                    "event {} outside {num_relations} relations",
                    r.event
                )));
            }
            if r.a >= num_nodes || r.b >= num_nodes || r.a == r.b {
                return Err(Error::Validation(format!(
                    "invalid pair ({}, {})",
                    r.a, r.b
                )));
            }
            neighbors[r.event][r.a].push(r.b);
            neighbors[r.event][r.b].push(r.a);
        }
        for rel in &mut neighbors {
            for list in rel.iter_mut() {
                list.sort_unstable();
                list.dedup();
            }
        }
        let participation: Vec<usize> = (0..num_nodes)
            .map(|v| neighbors.iter().filter(|rel| !rel[v].is_empty()).count())
            .collect();
        let aggregation = neighbors
            .iter()
            .map(|rel| {
                let mut b = Tensor::zeros(num_nodes, num_nodes);
                for (v, list) in rel.iter().enumerate() {
                    for &u in list {
                        let d = (list.len() * rel[u].len()) as f64;
                        b.set(v, u, 1.0 / (d.sqrt() * participation[v] as f64));
                    }
                }
                Arc::new(SparseMatrix::from_dense(&b))
            })
            .collect();
        Ok(RelGraph {
            num_nodes,
            neighbors,
            participation,
            aggregation,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.neighbors.len()
    }

    /// `R_v`: relations in which `v` has at least one neighbor.
    pub fn participation(&self, v: usize) -> usize {
        self.participation[v]
    }

    pub fn neighbors(&self, v: usize, r: usize) -> &[usize] {
        &self.neighbors[r][v]
    }

    pub fn adjacency(&self, r: usize) -> Tensor {
        let mut a = Tensor::zeros(self.num_nodes, self.num_nodes);
        for (v, list) in self.neighbors[r].iter().enumerate() {
            for &u in list {
                a.set(v, u, 1.0);
            }
        }
        a
    }

    pub fn normalized(&self, r: usize) -> Tensor {
        normalize_adjacency(&self.adjacency(r)).expect("relation adjacency is symmetric")
    }

    pub fn aggregation(&self, r: usize) -> &Arc<SparseMatrix> {
        &self.aggregation[r]
    }
}
