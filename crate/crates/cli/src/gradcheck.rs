//! Whole-model gradient check on the micro configuration.

use std::fmt::Write as _;

use anyhow::Result;
use hmgrl::featurize::DescriptorSizes;
use hmgrl::model::{Context, HmgrlModel, MixupMode, Mode, ModelConfig, StepRngs};
use hmgrl::numkit::Tape;
use hmgrl_oracle::{compare_gradients, finite_difference_grad, sample_coords, FdConfig};

use crate::presets::preset;
use crate::synth::{generate, SynthConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckRow {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

pub struct MicroProblem {
    pub model: HmgrlModel,
    pub ctx: Context,
    pub pairs: Vec<(usize, usize)>,
    pub events: Vec<usize>,
}

/// Twelve drugs, four events, one batch of eight pairs.
pub fn micro_setup(seed: u64) -> Result<MicroProblem> {
    let data = generate(&SynthConfig {
        seed,
        drugs: 12,
        events: 4,
        density: 0.4,
        sizes: DescriptorSizes {
            targets: 8,
            enzymes: 6,
            substructures: 10,
        },
        groups: 0,
        noise: 0.1,
    })?;
    let config = ModelConfig {
        seed,
        dropout: 0.2,
        ..preset("micro").expect("built-in preset")
    };
    let records = data.ddis.records();
    let ctx = Context::new(&data.table, records, data.ddis.num_events(), &config)?;
    let model = HmgrlModel::new(
        config,
        data.table.len(),
        data.ddis.num_events(),
        data.table.sizes(),
    )?;
    let pairs = records[..8].iter().map(|r| (r.a, r.b)).collect();
    let events = records[..8].iter().map(|r| r.event).collect();
    Ok(MicroProblem {
        model,
        ctx,
        pairs,
        events,
    })
}

/// Compares tape gradients of the total training loss with central
/// differences on up to `samples` coordinates of every named parameter.
/// Dropout masks, the mixing partner and `λ = 0.7` are frozen across probes.
pub fn run_micro(fd: &FdConfig, seed: u64) -> Result<Vec<GradcheckRow>> {
    let MicroProblem {
        model,
        ctx,
        pairs,
        events,
    } = micro_setup(seed)?;
    let batch = ctx.inputs.batch(&pairs, Some(&events), model.num_events)?;
    let rngs = StepRngs::new(seed ^ 0x5eed);
    let loss = |store: &hmgrl::numkit::ParamStore, tape: &Tape| -> Result<hmgrl::numkit::Var> {
        let mut r = rngs.clone();
        let mode = Mode::Train {
            rngs: &mut r,
            mixup: MixupMode::Fixed(0.7),
        };
        Ok(model
            .forward_with(tape, store, &ctx, &batch, mode)?
            .total
            .expect("labels supplied"))
    };
    let mut analytic = model.store.clone();
    analytic.zero_grads();
    {
        let tape = Tape::new();
        let l = loss(&model.store, &tape)?;
        tape.backward(l)?.accumulate_into(&mut analytic);
    }
    let mut rows = Vec::new();
    for id in model.store.ids() {
        let value = model.store.value(id);
        let coords = sample_coords(value.len(), fd.samples, id.index() as u64 + seed);
        let mut probe = model.store.clone();
        let numeric = finite_difference_grad(
            |x| {
                probe.value_mut(id).data_mut().copy_from_slice(x);
                let tape = Tape::new();
                match loss(&probe, &tape) {
                    Ok(l) => tape.scalar(l),
                    Err(_) => f64::NAN,
                }
            },
            value.data(),
            &coords,
            fd.step,
        )?;
        let grad = analytic.grad(id);
        let a: Vec<f64> = coords.iter().map(|&c| grad.data()[c]).collect();
        let cmp = compare_gradients(&a, &numeric, fd);
        rows.push(GradcheckRow {
            name: model.store.name(id).to_string(),
            checked: coords.len(),
            max_rel_err: cmp.max_rel_err,
            max_abs_err: cmp.max_abs_err,
            passed: cmp.passed,
        });
    }
    Ok(rows)
}

pub fn format_table(rows: &[GradcheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>12}  {:>12}  status",
        "parameter", "checked", "max_rel_err", "max_abs_err"
    );
    for r in rows {
        let status = if r.passed { "ok" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>12.3e}  {:>12.3e}  {status}",
            r.name, r.checked, r.max_rel_err, r.max_abs_err
        );
    }
    out
}
