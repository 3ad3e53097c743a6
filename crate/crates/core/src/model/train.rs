use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{seeded, Context, HmgrlModel, MixupMode, Mode, StepRngs, STREAM_SHUFFLE};
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::graphcore::DdiRecord;
use crate::mvdsc::ViewDiagnostics;
use crate::numkit::{OptimizerState, Tape, Tensor};

/// One optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub batch: usize,
    pub pairs: usize,
    pub loss_ce: f64,
    pub loss_dsc: f64,
    /// `loss_ce + α loss_dsc`.
    pub total: f64,
    pub mixup_lambda: Option<f64>,
    pub views: Vec<ViewDiagnostics>,
    /// Excluded from reproducibility comparisons.
    pub wall_ms: f64,
}

impl TrainRecord {
    /// Equality of everything except wall time, within `tol`.
    pub fn matches(&self, other: &TrainRecord, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        let lambda = match (self.mixup_lambda, other.mixup_lambda) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        self.epoch == other.epoch
            && self.batch == other.batch
            && self.pairs == other.pairs
            && close(self.loss_ce, other.loss_ce)
            && close(self.loss_dsc, other.loss_dsc)
            && close(self.total, other.total)
            && lambda
            && self.views.len() == other.views.len()
            && self.views.iter().zip(&other.views).all(|(a, b)| {
                a.view == b.view
                    && a.skipped_heads == b.skipped_heads
                    && close(a.graph_cut, b.graph_cut)
                    && close(a.orthogonality, b.orthogonality)
            })
    }
}

/// Splits `0..n` into consecutive chunks of `size`; a tail shorter than
/// `min` is folded into the chunk before it.
pub fn batch_ranges(n: usize, size: usize, min: usize) -> Vec<Range<usize>> {
    let size = size.max(1);
    let mut out: Vec<Range<usize>> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() < min) {
        let tail = out.pop().expect("checked above");
        out.last_mut().expect("checked above").end = tail.end;
    }
    out
}

/// Typed predictions with their probability rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub pairs: Vec<(usize, usize)>,
    pub probabilities: Tensor,
    /// Argmax per row, ties to the lowest event index.
    pub events: Vec<usize>,
}

impl HmgrlModel {
    /// Optimizes the model on `samples` for the configured epochs. `observer`
    /// sees every record as it is produced.
    pub fn fit(
        &mut self,
        ctx: &Context,
        samples: &[DdiRecord],
        observer: &mut dyn FnMut(&TrainRecord),
    ) -> Result<Vec<TrainRecord>> {
        let mut samples = samples.to_vec();
        if self.config.mirror_pairs {
            let mirrored: Vec<_> = samples
                .iter()
                .map(|r| DdiRecord {
                    a: r.b,
                    b: r.a,
                    event: r.event,
                })
                .collect();
            samples.extend(mirrored);
        }
        let min = self
            .config
            .min_batch()
            .max(if self.config.mixup { 2 } else { 1 });
        if samples.len() < min {
            return Err(Error::BatchSize {
                op: "train",
                min,
                got: samples.len(),
            });
        }
        let mut optimizer = OptimizerState::new(self.config.adam(), &self.store)?;
        let mut shuffle = seeded(self.config.seed, STREAM_SHUFFLE);
        let mut rngs = StepRngs::new(self.config.seed);
        let mixup = if self.config.mixup {
            MixupMode::Sampled
        } else {
            MixupMode::Off
        };
        let mut records = Vec::new();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut shuffle);
            let mut epoch_total = 0.0;
            let ranges = batch_ranges(order.len(), self.config.batch_size, min);
            for (b, range) in ranges.iter().enumerate() {
                let start = Instant::now();
                let chosen: Vec<DdiRecord> =
                    order[range.clone()].iter().map(|&i| samples[i]).collect();
                let pairs: Vec<(usize, usize)> = chosen.iter().map(|r| (r.a, r.b)).collect();
                let events: Vec<usize> = chosen.iter().map(|r| r.event).collect();
                let batch = ctx.inputs.batch(&pairs, Some(&events), self.num_events)?;
                let tape = Tape::new();
                let diag = |e: Error| match e {
                    Error::NonFinite(m) => {
                        Error::NonFinite(format!("epoch {epoch} batch {b}: {m}"))
                    }
                    other => other,
                };
                let out = self
                    .forward(
                        &tape,
                        ctx,
                        &batch,
                        Mode::Train {
                            rngs: &mut rngs,
                            mixup,
                        },
                    )
                    .map_err(diag)?;
                let total = out.total.expect("labels were supplied");
                let record = TrainRecord {
                    epoch,
                    batch: b,
                    pairs: pairs.len(),
                    loss_ce: tape.scalar(out.loss_ce.expect("labels were supplied")),
                    loss_dsc: tape.scalar(out.loss_dsc),
                    total: tape.scalar(total),
                    mixup_lambda: out.lambda,
                    views: out.views,
                    wall_ms: 0.0,
                };
                if !record.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "epoch {epoch} batch {b}: loss_ce {} loss_dsc {}",
                        record.loss_ce, record.loss_dsc
                    )));
                }
                let grads = tape.backward(total).map_err(diag)?;
                self.store.zero_grads();
                grads.accumulate_into(&mut self.store);
                optimizer.step(&mut self.store).map_err(diag)?;
                let record = TrainRecord {
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    ..record
                };
                epoch_total += record.total;
                observer(&record);
                records.push(record);
            }
            log::debug!(
                "epoch {epoch}: mean loss {:.6}",
                epoch_total / ranges.len() as f64
            );
        }
        Ok(records)
    }

    /// Deterministic inference over `pairs`. Pairs are scored in batches of
    /// the configured size; a set smaller than the clustering views need is
    /// padded with repeats of itself, and the padding rows are discarded.
    pub fn predict(&self, ctx: &Context, pairs: &[(usize, usize)]) -> Result<Predictions> {
        let mut probabilities = Tensor::zeros(pairs.len(), self.num_events);
        let min = self.config.min_batch();
        for range in batch_ranges(pairs.len(), self.config.batch_size, min) {
            let mut chunk: Vec<(usize, usize)> = pairs[range.clone()].to_vec();
            let real = chunk.len();
            let mut i = 0;
            while chunk.len() < min {
                chunk.push(chunk[i % real]);
                i += 1;
            }
            let batch = ctx.inputs.batch(&chunk, None, self.num_events)?;
            let tape = Tape::new();
            let out = self.forward(&tape, ctx, &batch, Mode::Inference)?;
            let p = tape.value(out.probabilities);
            for r in 0..real {
                probabilities
                    .row_mut(range.start + r)
                    .copy_from_slice(p.row(r));
            }
        }
        let events = (0..pairs.len())
            .map(|r| argmax(probabilities.row(r)))
            .collect();
        Ok(Predictions {
            pairs: pairs.to_vec(),
            probabilities,
            events,
        })
    }
}
