//! End-to-end assembly: structure embeddings, pair encoders, clustering
//! views, decoder, losses and the training loop.

mod checkpoint;
mod config;
mod train;

pub use checkpoint::CheckpointMeta;
pub use config::ModelConfig;
pub use train::{batch_ranges, Predictions, TrainRecord};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::encoders::{assemble_comprehensive, CnnBlock, EncoderBlock, SourceEncodings};
use crate::error::{Error, Result};
use crate::featurize::{DescriptorSizes, DrugTable, PairBatch, PairInputs};
use crate::graphcore::{
    fuse_ragse, rgcn_forward, DdiRecord, DdsGraph, DdsPropagator, RelGraph, RgcnLayer,
};
use crate::mvdsc::{mvdsc_forward, DscView, ViewDiagnostics, ViewKind, ViewSources};
use crate::numkit::{Linear, ParamId, ParamStore, Tape, Tensor, Var};

/// Log floor applied to predicted probabilities.
pub const LOG_FLOOR: f64 = 1e-12;

// Independent RNG streams derived from the configured seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_MIXUP: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dataset-level state a model runs against: per-drug inputs, the DDI graph
/// of the training interactions and the similarity propagator.
#[derive(Clone, Debug)]
pub struct Context {
    pub inputs: PairInputs,
    pub graph: RelGraph,
    pub propagator: DdsPropagator,
    /// Interactions the graph was built from.
    pub edges: Vec<DdiRecord>,
}

impl Context {
    pub fn new(
        table: &DrugTable,
        edges: &[DdiRecord],
        num_events: usize,
        config: &ModelConfig,
    ) -> Result<Self> {
        let inputs = PairInputs::new(table)?;
        Self::from_inputs(inputs, edges, num_events, config)
    }

    pub fn from_inputs(
        inputs: PairInputs,
        edges: &[DdiRecord],
        num_events: usize,
        config: &ModelConfig,
    ) -> Result<Self> {
        let graph = RelGraph::new(inputs.num_drugs(), num_events, edges)?;
        let propagator = DdsGraph::new(&inputs.features, config.dds_top_k)?.propagator(config.hops);
        Ok(Context {
            inputs,
            graph,
            propagator,
            edges: edges.to_vec(),
        })
    }

    pub fn num_events(&self) -> usize {
        self.graph.num_relations()
    }
}

/// `FC → relu → dropout → FC → softmax`.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub hidden: Linear,
    pub output: Linear,
}

pub fn decode<R: Rng + ?Sized>(
    tape: &Tape,
    store: &ParamStore,
    decoder: &Decoder,
    features: Var,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let h = tape.relu(decoder.hidden.forward(tape, store, features)?)?;
    let h = tape.dropout(h, dropout, training, rng)?;
    tape.softmax_rows(decoder.output.forward(tape, store, h)?)
}

/// `−Σ ŷ log y` with the log floored at [`LOG_FLOOR`].
pub fn loss_ce(tape: &Tape, probabilities: Var, labels: &Tensor) -> Result<Var> {
    let log = tape.log_clamped(probabilities, LOG_FLOOR)?;
    let weighted = tape.mask_mul(log, labels.clone())?;
    tape.scale(tape.sum(weighted)?, -1.0)
}

/// `L_ce + α L_DSC`.
pub fn total_loss(tape: &Tape, ce: Var, dsc: Var, alpha: f64) -> Result<Var> {
    tape.add(ce, tape.scale(dsc, alpha)?)
}

/// Draws `λ ~ Beta(a, a)` and a random partner permutation for `k` rows.
pub fn sample_mixup<R: Rng + ?Sized>(
    k: usize,
    beta: f64,
    rng: &mut R,
) -> Result<(f64, Vec<usize>)> {
    if k < 2 {
        return Err(Error::BatchSize {
            op: "mixup",
            min: 2,
            got: k,
        });
    }
    let dist =
        Beta::new(beta, beta).map_err(|e| Error::Param(format!("mixup beta {beta}: {e}")))?;
    let lambda = dist.sample(rng);
    let mut partner: Vec<usize> = (0..k).collect();
    partner.shuffle(rng);
    Ok((lambda, partner))
}

/// `λ h_i + (1 − λ) h_{partner(i)}` applied to features and labels alike.
pub fn mixup_batch(
    tape: &Tape,
    features: Var,
    labels: &Tensor,
    partner: &[usize],
    lambda: f64,
) -> Result<(Var, Tensor)> {
    let k = features.rows();
    if partner.len() != k || labels.rows() != k {
        return Err(Error::shape(
            "mixup",
            format!(
                "{k} rows, {} partners, {} labels",
                partner.len(),
                labels.rows()
            ),
        ));
    }
    if partner.iter().any(|&j| j >= k) {
        return Err(Error::shape("mixup", "partner index out of range"));
    }
    let own = tape.scale(features, lambda)?;
    let other = tape.scale(tape.gather_rows(features, partner)?, 1.0 - lambda)?;
    let mixed = tape.add(own, other)?;
    let other_labels = labels.select_rows(partner);
    let mixed_labels = labels.zip_map(&other_labels, |a, b| lambda * a + (1.0 - lambda) * b);
    Ok((mixed, mixed_labels))
}

/// How a training forward pass applies Mixup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MixupMode {
    Off,
    /// Draw `λ` from the configured Beta distribution.
    Sampled,
    /// Use this `λ` with a sampled partner permutation.
    Fixed(f64),
}

/// Random streams consumed by training forward passes.
#[derive(Clone, Debug)]
pub struct StepRngs {
    pub mixup: ChaCha8Rng,
    pub dropout: ChaCha8Rng,
}

impl StepRngs {
    pub fn new(seed: u64) -> Self {
        StepRngs {
            mixup: seeded(seed, STREAM_MIXUP),
            dropout: seeded(seed, STREAM_DROPOUT),
        }
    }
}

pub enum Mode<'a> {
    Inference,
    Train {
        rngs: &'a mut StepRngs,
        mixup: MixupMode,
    },
}

pub struct ForwardOutput {
    pub probabilities: Var,
    /// Labels the loss was computed against, after mixing.
    pub labels: Option<Tensor>,
    pub loss_ce: Option<Var>,
    pub loss_dsc: Var,
    pub total: Option<Var>,
    pub views: Vec<ViewDiagnostics>,
    pub lambda: Option<f64>,
}

/// All parameters of the model, each in exactly one named slot.
#[derive(Clone, Debug)]
pub struct HmgrlModel {
    pub config: ModelConfig,
    pub num_drugs: usize,
    pub num_events: usize,
    pub sizes: DescriptorSizes,
    pub store: ParamStore,
    pub rgcn: Vec<RgcnLayer>,
    /// `W_t, W_e, W_s`.
    pub fuse: [ParamId; 3],
    pub cnn: CnnBlock,
    /// Embedding, target, enzyme and substructure encoders.
    pub encoders: [EncoderBlock; 4],
    pub views: Vec<DscView>,
    pub decoder: Decoder,
}

impl HmgrlModel {
    pub fn new(
        config: ModelConfig,
        num_drugs: usize,
        num_events: usize,
        sizes: DescriptorSizes,
    ) -> Result<Self> {
        config.validate()?;
        if num_drugs < 2 || num_events == 0 {
            return Err(Error::Param(format!(
                "{num_drugs} drugs and {num_events} events"
            )));
        }
        let rng = &mut seeded(config.seed, STREAM_INIT);
        let mut store = ParamStore::new();
        let s = &mut store;
        let (n, d) = (num_drugs, config.d_embed);
        let rgcn = (0..config.rgcn_layers)
            .map(|l| {
                RgcnLayer::new(
                    s,
                    &format!("rgcn.{l}"),
                    num_events,
                    if l == 0 { 3 * n } else { d },
                    d,
                    rng,
                )
            })
            .collect();
        let fuse = ["t", "e", "s"].map(|c| s.glorot(format!("fuse.{c}"), d, d, rng));
        let cnn = CnnBlock::new(s, "cnn", &config.cnn, config.d_att, rng)?;
        let enc = &config.encoder;
        let encoders = [
            EncoderBlock::new(s, "enc.emb", enc, 2 * d, config.d_emb, rng)?,
            EncoderBlock::new(s, "enc.tar", enc, 2 * n, config.d_att, rng)?,
            EncoderBlock::new(s, "enc.enz", enc, 2 * n, config.d_att, rng)?,
            EncoderBlock::new(s, "enc.sub", enc, 2 * n, config.d_att, rng)?,
        ];
        let feature = config.feature_dim();
        let views = config
            .views
            .iter()
            .map(|&kind| {
                let source = match kind {
                    ViewKind::Comprehensive => feature,
                    ViewKind::Targets => sizes.targets,
                    ViewKind::Enzymes => sizes.enzymes,
                    ViewKind::Substructures => sizes.substructures,
                };
                DscView::new(
                    s,
                    kind,
                    source,
                    feature,
                    config.adj_dim,
                    config.dsc_heads,
                    config.clusters,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder_in = feature * config.views.len().max(1);
        let decoder = Decoder {
            hidden: Linear::new(s, "dec.fc1", decoder_in, config.decoder_hidden, true, rng),
            output: Linear::new(s, "dec.fc2", config.decoder_hidden, num_events, true, rng),
        };
        Ok(HmgrlModel {
            config,
            num_drugs,
            num_events,
            sizes,
            store,
            rgcn,
            fuse,
            cnn,
            encoders,
            views,
            decoder,
        })
    }

    fn check_context(&self, ctx: &Context) -> Result<()> {
        if ctx.inputs.num_drugs() != self.num_drugs || ctx.num_events() != self.num_events {
            return Err(Error::Validation(format!(
                "context has {} drugs and {} events, model expects {} and {}",
                ctx.inputs.num_drugs(),
                ctx.num_events(),
                self.num_drugs,
                self.num_events
            )));
        }
        Ok(())
    }

    /// Fused structure embeddings `x̂` for every drug, `N × d′`.
    pub fn drug_embeddings(&self, tape: &Tape, store: &ParamStore, ctx: &Context) -> Result<Var> {
        let x = tape.constant(ctx.inputs.features.initial.clone());
        let xbar = rgcn_forward(tape, store, &ctx.graph, x, &self.rgcn)?;
        let channels = ctx.propagator.apply(tape, xbar)?;
        fuse_ragse(tape, channels, self.fuse.map(|id| tape.param(store, id)))
    }

    /// Comprehensive pair features `H̃`, `K × (4 d_att + d_emb)`.
    pub fn comprehensive(
        &self,
        tape: &Tape,
        store: &ParamStore,
        embeddings: Var,
        batch: &PairBatch,
    ) -> Result<Var> {
        let us: Vec<usize> = batch.pairs.iter().map(|p| p.0).collect();
        let vs: Vec<usize> = batch.pairs.iter().map(|p| p.1).collect();
        let x_pair = tape.concat_cols(&[
            tape.gather_rows(embeddings, &us)?,
            tape.gather_rows(embeddings, &vs)?,
        ])?;
        let smiles: Vec<_> = batch.smiles.iter().map(|(a, b)| (a, b)).collect();
        let [tar, enz, sub] = &batch.similarity;
        let enc = SourceEncodings {
            smiles: self.cnn.forward(tape, store, &smiles)?,
            embedding: self.encoders[0].forward(tape, store, x_pair)?,
            targets: self.encoders[1].forward(tape, store, tape.constant(tar.clone()))?,
            enzymes: self.encoders[2].forward(tape, store, tape.constant(enz.clone()))?,
            substructures: self.encoders[3].forward(tape, store, tape.constant(sub.clone()))?,
        };
        assemble_comprehensive(tape, &enc)
    }

    pub fn forward(
        &self,
        tape: &Tape,
        ctx: &Context,
        batch: &PairBatch,
        mode: Mode<'_>,
    ) -> Result<ForwardOutput> {
        self.forward_with(tape, &self.store, ctx, batch, mode)
    }

    /// Full pass against an explicit parameter store with the same layout.
    pub fn forward_with(
        &self,
        tape: &Tape,
        store: &ParamStore,
        ctx: &Context,
        batch: &PairBatch,
        mode: Mode<'_>,
    ) -> Result<ForwardOutput> {
        self.check_context(ctx)?;
        let k = batch.len();
        let min = self.config.min_batch();
        if k < min {
            return Err(Error::BatchSize {
                op: "forward",
                min,
                got: k,
            });
        }
        let embeddings = self.drug_embeddings(tape, store, ctx)?;
        let mut h = self.comprehensive(tape, store, embeddings, batch)?;
        let mut labels = batch.labels.clone();
        let mut summed: Vec<&Tensor> = batch.summed.iter().collect();
        let mut dominant = None;
        let mut lambda = None;

        let (training, dropout_rng) = match mode {
            Mode::Inference => (false, None),
            Mode::Train { rngs, mixup } => {
                let draw = match mixup {
                    MixupMode::Off => None,
                    MixupMode::Sampled => {
                        Some(sample_mixup(k, self.config.mixup_beta, &mut rngs.mixup)?)
                    }
                    MixupMode::Fixed(l) => Some((l, sample_mixup(k, 1.0, &mut rngs.mixup)?.1)),
                };
                if let Some((l, partner)) = draw {
                    let y = labels
                        .as_ref()
                        .ok_or_else(|| Error::Validation("mixup needs labels".into()))?;
                    let (mixed, mixed_labels) = mixup_batch(tape, h, y, &partner, l)?;
                    h = mixed;
                    labels = Some(mixed_labels);
                    lambda = Some(l);
                    // Attribute sequences are not mixable; each row keeps the
                    // sequences of whichever side carries more weight.
                    if l < 0.5 {
                        dominant = Some(batch.summed.each_ref().map(|t| t.select_rows(&partner)));
                    }
                }
                (true, Some(&mut rngs.dropout))
            }
        };
        if let Some(d) = &dominant {
            summed = d.iter().collect();
        }

        let (features, loss_dsc, views) = if self.views.is_empty() {
            (h, tape.constant(Tensor::scalar(0.0)), Vec::new())
        } else {
            let sources = ViewSources {
                targets: tape.constant(summed[0].clone()),
                enzymes: tape.constant(summed[1].clone()),
                substructures: tape.constant(summed[2].clone()),
            };
            let out = mvdsc_forward(tape, store, &self.views, h, &sources)?;
            (out.features, out.loss, out.views)
        };

        let mut inert = seeded(0, STREAM_DROPOUT);
        let rng = dropout_rng.unwrap_or(&mut inert);
        let probabilities = decode(
            tape,
            store,
            &self.decoder,
            features,
            self.config.dropout,
            training,
            rng,
        )?;
        let (loss_ce, total) = match &labels {
            Some(y) => {
                let ce = loss_ce(tape, probabilities, y)?;
                (
                    Some(ce),
                    Some(total_loss(tape, ce, loss_dsc, self.config.alpha)?),
                )
            }
            None => (None, None),
        };
        Ok(ForwardOutput {
            probabilities,
            labels,
            loss_ce,
            loss_dsc,
            total,
            views,
            lambda,
        })
    }
}
