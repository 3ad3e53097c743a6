//! Affine layer bound to a parameter store.

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// `x W + b` with `W: d_in × d_out` and an optional `1 × d_out` bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.glorot(format!("{name}.w"), d_in, d_out, rng);
        let bias = with_bias.then(|| store.bias(format!("{name}.b"), d_in, d_out, rng));
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => tape.add_row(y, tape.param(store, b)),
            None => Ok(y),
        }
    }
}
