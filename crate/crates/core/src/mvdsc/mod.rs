//! Multi-view differentiable spectral clustering over a batch of pairs.
//!
//! Each view learns `M` row-stochastic adjacencies between the pairs of a
//! batch, cuts each into `C` soft clusters, and mixes the assignments back
//! into the comprehensive feature. Two unsupervised losses steer the
//! assignments toward a normalized cut with balanced, orthogonal clusters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViewKind {
    /// Adjacency from the comprehensive feature.
    #[serde(rename = "H")]
    Comprehensive,
    #[serde(rename = "T")]
    Targets,
    #[serde(rename = "E")]
    Enzymes,
    #[serde(rename = "S")]
    Substructures,
}

impl ViewKind {
    pub const ALL: [ViewKind; 4] = [
        ViewKind::Comprehensive,
        ViewKind::Targets,
        ViewKind::Enzymes,
        ViewKind::Substructures,
    ];

    pub fn letter(self) -> &'static str {
        match self {
            ViewKind::Comprehensive => "H",
            ViewKind::Targets => "T",
            ViewKind::Enzymes => "E",
            ViewKind::Substructures => "S",
        }
    }
}

/// `softmax_rows((S W_m)(S W_m)ᵀ)` for each head.
pub fn build_dsc_adjacency(tape: &Tape, source: Var, heads: &[Var]) -> Result<Vec<Var>> {
    let k = source.rows();
    if k < 2 {
        return Err(Error::BatchSize {
            op: "build_dsc_adjacency",
            min: 2,
            got: k,
        });
    }
    heads
        .iter()
        .map(|&w| {
            let proj = tape.matmul(source, w)?;
            let gram = tape.block_matmul_nt(proj, proj, k)?;
            tape.softmax_rows(gram)
        })
        .collect()
}

/// `relu(A (H̃ W))`.
pub fn graph_cut_assign(tape: &Tape, adjacency: Var, h: Var, w: Var) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    tape.relu(tape.matmul(adjacency, hw)?)
}

/// `relu((F_1 ‖ … ‖ F_M) W + H̃)`.
pub fn dsc_output(tape: &Tape, assignments: &[Var], h: Var, w_view: Var) -> Result<Var> {
    let f = if assignments.len() == 1 {
        assignments[0]
    } else {
        tape.concat_cols(assignments)?
    };
    let mixed = tape.matmul(f, w_view)?;
    tape.relu(tape.add(mixed, h)?)
}

/// Mean over non-degenerate heads of one loss term. Heads whose assignment
/// matrix is identically zero contribute nothing but still count toward the
/// `1/M` divisor.
#[derive(Clone, Copy, Debug)]
pub struct HeadLoss {
    pub value: Var,
    pub skipped: usize,
}

fn is_zero(tape: &Tape, v: Var) -> bool {
    tape.value(v).data().iter().all(|&x| x == 0.0)
}

fn average_heads(
    tape: &Tape,
    assignments: &[Var],
    sign: f64,
    mut term: impl FnMut(usize, Var) -> Result<Var>,
) -> Result<HeadLoss> {
    let mut acc: Option<Var> = None;
    let mut skipped = 0;
    for (m, &f) in assignments.iter().enumerate() {
        if is_zero(tape, f) {
            skipped += 1;
            continue;
        }
        let t = term(m, f)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, t)?,
            None => t,
        });
    }
    let value = match acc {
        Some(a) => tape.scale(a, sign / assignments.len() as f64)?,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    Ok(HeadLoss { value, skipped })
}

/// `−(1/M) Σ_m tr(Fᵀ A F) / tr(Fᵀ F)`.
pub fn loss_graph_cut(tape: &Tape, assignments: &[Var], adjacencies: &[Var]) -> Result<HeadLoss> {
    if assignments.len() != adjacencies.len() || assignments.is_empty() {
        return Err(Error::shape(
            "loss_graph_cut",
            format!(
                "{} assignments for {} adjacencies",
                assignments.len(),
                adjacencies.len()
            ),
        ));
    }
    average_heads(tape, assignments, -1.0, |m, f| {
        let af = tape.matmul(adjacencies[m], f)?;
        let num = tape.sum(tape.mul(f, af)?)?;
        let den = tape.sum(tape.mul(f, f)?)?;
        tape.div_scalar(num, den)
    })
}

/// `(1/M) Σ_m ‖FᵀF / ‖FᵀF‖_F − I_C/√C‖_F`.
pub fn loss_orthogonality(tape: &Tape, assignments: &[Var]) -> Result<HeadLoss> {
    if assignments.is_empty() {
        return Err(Error::shape("loss_orthogonality", "no assignments"));
    }
    average_heads(tape, assignments, 1.0, |_, f| {
        let c = f.cols();
        let gram = tape.matmul(tape.transpose(f)?, f)?;
        let norm = tape.frobenius_norm(gram)?;
        let unit = tape.div_scalar(gram, norm)?;
        let target = tape.constant(Tensor::identity(c).scale(1.0 / (c as f64).sqrt()));
        tape.frobenius_norm(tape.sub(unit, target)?)
    })
}

/// Parameters of one view.
#[derive(Clone, Debug)]
pub struct DscView {
    pub kind: ViewKind,
    pub adjacency: Vec<ParamId>,
    pub assignment: Vec<ParamId>,
    pub mix: ParamId,
    pub clusters: usize,
}

impl DscView {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        kind: ViewKind,
        d_source: usize,
        d_feature: usize,
        adj_dim: usize,
        heads: usize,
        clusters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || clusters == 0 || adj_dim == 0 {
            return Err(Error::Param(
                "views need positive heads, clusters and adj_dim".into(),
            ));
        }
        let name = format!("dsc.{}", kind.letter());
        let adjacency = (0..heads)
            .map(|m| store.glorot(format!("{name}.adj.{m}"), d_source, adj_dim, rng))
            .collect();
        let assignment = (0..heads)
            .map(|m| store.glorot(format!("{name}.assign.{m}"), d_feature, clusters, rng))
            .collect();
        let mix = store.glorot(format!("{name}.mix"), heads * clusters, d_feature, rng);
        Ok(DscView {
            kind,
            adjacency,
            assignment,
            mix,
            clusters,
        })
    }

    pub fn heads(&self) -> usize {
        self.adjacency.len()
    }

    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        h: Var,
        source: Var,
    ) -> Result<DscOutput> {
        let k = h.rows();
        let min = self.clusters.max(2);
        if k < min {
            return Err(Error::BatchSize {
                op: "dsc",
                min,
                got: k,
            });
        }
        if source.rows() != k {
            return Err(Error::shape(
                "dsc",
                format!("{} source rows for {k} pairs", source.rows()),
            ));
        }
        let adj_w: Vec<Var> = self
            .adjacency
            .iter()
            .map(|&id| tape.param(store, id))
            .collect();
        let adjacencies = build_dsc_adjacency(tape, source, &adj_w)?;
        let assignments = adjacencies
            .iter()
            .zip(&self.assignment)
            .map(|(&a, &id)| graph_cut_assign(tape, a, h, tape.param(store, id)))
            .collect::<Result<Vec<_>>>()?;
        let output = dsc_output(tape, &assignments, h, tape.param(store, self.mix))?;
        let gc = loss_graph_cut(tape, &assignments, &adjacencies)?;
        let or = loss_orthogonality(tape, &assignments)?;
        Ok(DscOutput {
            adjacencies,
            assignments,
            output,
            graph_cut: gc,
            orthogonality: or,
        })
    }
}

pub struct DscOutput {
    pub adjacencies: Vec<Var>,
    pub assignments: Vec<Var>,
    pub output: Var,
    pub graph_cut: HeadLoss,
    pub orthogonality: HeadLoss,
}

/// Scalar loss values of one view, read off the tape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewDiagnostics {
    pub view: ViewKind,
    pub graph_cut: f64,
    pub orthogonality: f64,
    pub skipped_heads: usize,
}

pub struct MvdscOutput {
    /// `F_H ‖ F_T ‖ F_E ‖ F_S` over the configured views.
    pub features: Var,
    /// Mean over views of `L_gc + L_or`.
    pub loss: Var,
    pub views: Vec<ViewDiagnostics>,
}

/// Inputs of each view's adjacency: the comprehensive feature for `H`, the
/// summed attribute sequences for the others.
#[derive(Clone, Copy, Debug)]
pub struct ViewSources {
    pub targets: Var,
    pub enzymes: Var,
    pub substructures: Var,
}

pub fn mvdsc_forward(
    tape: &Tape,
    store: &ParamStore,
    views: &[DscView],
    h: Var,
    sources: &ViewSources,
) -> Result<MvdscOutput> {
    if views.is_empty() {
        return Err(Error::Param("at least one view is required".into()));
    }
    let mut outputs = Vec::with_capacity(views.len());
    let mut total: Option<Var> = None;
    let mut diagnostics = Vec::with_capacity(views.len());
    for view in views {
        let source = match view.kind {
            ViewKind::Comprehensive => h,
            ViewKind::Targets => sources.targets,
            ViewKind::Enzymes => sources.enzymes,
            ViewKind::Substructures => sources.substructures,
        };
        let out = view.forward(tape, store, h, source)?;
        let term = tape.add(out.graph_cut.value, out.orthogonality.value)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
        diagnostics.push(ViewDiagnostics {
            view: view.kind,
            graph_cut: tape.scalar(out.graph_cut.value),
            orthogonality: tape.scalar(out.orthogonality.value),
            skipped_heads: out.graph_cut.skipped,
        });
        outputs.push(out.output);
    }
    let loss = tape.scale(total.expect("non-empty views"), 1.0 / views.len() as f64)?;
    let features = if outputs.len() == 1 {
        outputs[0]
    } else {
        tape.concat_cols(&outputs)?
    };
    Ok(MvdscOutput {
        features,
        loss,
        views: diagnostics,
    })
}
