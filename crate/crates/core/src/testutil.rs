//! Shared helpers for unit tests.

use hmgrl_oracle::{compare_gradients, finite_difference_grad, sample_coords, FdConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numkit::{ParamStore, Tape, Tensor, Var};

pub fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(rows, cols, 1.0, &mut rng)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Compares tape gradients of a scalar loss against central differences on
/// `samples` coordinates of every parameter. Returns the failing parameter
/// names with their worst relative error.
pub fn check_param_grads(
    store: &ParamStore,
    samples: usize,
    build: impl Fn(&Tape, &ParamStore) -> Var,
) -> Vec<(String, f64)> {
    let cfg = FdConfig {
        samples,
        ..FdConfig::default()
    };
    let mut analytic_store = store.clone();
    analytic_store.zero_grads();
    {
        let tape = Tape::new();
        let loss = build(&tape, store);
        tape.backward(loss)
            .unwrap()
            .accumulate_into(&mut analytic_store);
    }
    let mut failures = Vec::new();
    for id in store.ids() {
        let value = store.value(id);
        let coords = sample_coords(value.len(), samples, id.index() as u64 + 17);
        let numeric = finite_difference_grad(
            |x| {
                let mut probe = store.clone();
                probe.value_mut(id).data_mut().copy_from_slice(x);
                let tape = Tape::new();
                let loss = build(&tape, &probe);
                tape.scalar(loss)
            },
            value.data(),
            &coords,
            cfg.step,
        )
        .unwrap();
        let grad = analytic_store.grad(id);
        let analytic: Vec<f64> = coords.iter().map(|&c| grad.data()[c]).collect();
        let cmp = compare_gradients(&analytic, &numeric, &cfg);
        if !cmp.passed {
            failures.push((store.name(id).to_string(), cmp.max_rel_err));
        }
    }
    failures
}
