//! Relational graph convolution over the DDI graph.

use rand::Rng;

use super::RelGraph;
use crate::error::{Error, Result};
use crate::numkit::{ParamId, ParamStore, Tape, Var};

/// Per-relation weights `W_r` and the self-connection weight `W_o`.
#[derive(Clone, Debug)]
pub struct RgcnLayer {
    pub relation: Vec<ParamId>,
    pub self_loop: ParamId,
}

impl RgcnLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        relations: usize,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let relation = (0..relations)
            .map(|r| store.glorot(format!("{prefix}.w_rel.{r}"), d_in, d_out, rng))
            .collect();
        let self_loop = store.glorot(format!("{prefix}.w_self"), d_in, d_out, rng);
        RgcnLayer {
            relation,
            self_loop,
        }
    }
}

/// `relu(Σ_r diag(1/R_v) Â_r X W_r + X W_o)`. Rows with `R_v = 0` receive
/// only the self term.
pub fn rgcn_layer(
    tape: &Tape,
    graph: &RelGraph,
    x: Var,
    w_rel: &[Var],
    w_self: Var,
) -> Result<Var> {
    if w_rel.len() != graph.num_relations() {
        return Err(Error::shape(
            "rgcn_layer",
            format!(
                "{} relation weights for {} relations",
                w_rel.len(),
                graph.num_relations()
            ),
        ));
    }
    if x.rows() != graph.num_nodes() {
        return Err(Error::shape(
            "rgcn_layer",
            format!("{} feature rows for {} nodes", x.rows(), graph.num_nodes()),
        ));
    }
    let mut acc = tape.matmul(x, w_self)?;
    for (r, &w) in w_rel.iter().enumerate() {
        let agg = graph.aggregation(r);
        if agg.nnz() == 0 {
            continue;
        }
        let neigh = tape.sparse_matmul(agg, x)?;
        let msg = tape.matmul(neigh, w)?;
        acc = tape.add(acc, msg)?;
    }
    tape.relu(acc)
}

/// Stacked layers; the first consumes the initial similarity features.
pub fn rgcn_forward(
    tape: &Tape,
    store: &ParamStore,
    graph: &RelGraph,
    x: Var,
    layers: &[RgcnLayer],
) -> Result<Var> {
    let mut h = x;
    for layer in layers {
        let w_rel: Vec<Var> = layer
            .relation
            .iter()
            .map(|&id| tape.param(store, id))
            .collect();
        let w_self = tape.param(store, layer.self_loop);
        h = rgcn_layer(tape, graph, h, &w_rel, w_self)?;
    }
    Ok(h)
}
