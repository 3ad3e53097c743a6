//! FC layer followed by one post-norm transformer block over feature tokens.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Linear, ParamId, ParamStore, Tape, Tensor, Var};

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Tokens the FC output is split into.
    pub tokens: usize,
    pub heads: usize,
    pub token_dim: usize,
    pub ffn_enabled: bool,
    /// Hidden width of the feed-forward sublayer.
    pub ffn_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            tokens: 4,
            heads: 4,
            token_dim: 64,
            ffn_enabled: true,
            ffn_hidden: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tokens == 0 || self.heads == 0 || self.token_dim == 0 {
            return Err(Error::Param(
                "encoder tokens, heads and token_dim must be positive".into(),
            ));
        }
        if !self.token_dim.is_multiple_of(self.heads) {
            return Err(Error::Param(format!(
                "{} heads do not divide token_dim {}",
                self.heads, self.token_dim
            )));
        }
        if self.ffn_enabled && self.ffn_hidden == 0 {
            return Err(Error::Param("ffn_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Multi-head self-attention over the tokens of each pair separately.
#[derive(Clone, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

/// Attention result plus the per-head probability matrices, each stacking
/// one `tokens × tokens` block per pair.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        Attention {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, true, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, true, rng),
            output: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng),
            heads,
        }
    }

    /// `x` stacks `tokens` rows per pair.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        x: Var,
        tokens: usize,
    ) -> Result<AttentionOutput> {
        let dim = x.cols();
        let dh = dim / self.heads;
        let q = self.query.forward(tape, store, x)?;
        let k = self.key.forward(tape, store, x)?;
        let v = self.value.forward(tape, store, x)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.scale(tape.block_matmul_nt(qh, kh, tokens)?, scale)?;
            let p = tape.softmax_rows(scores)?;
            outs.push(tape.block_matmul(p, vh, tokens)?);
            weights.push(p);
        }
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        Ok(AttentionOutput {
            output: self.output.forward(tape, store, merged)?,
            weights,
        })
    }
}

#[derive(Clone, Debug)]
struct Norm {
    gain: ParamId,
    shift: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Norm {
            gain: store.insert(format!("{name}.gain"), Tensor::filled(1, dim, 1.0)),
            shift: store.insert(format!("{name}.shift"), Tensor::zeros(1, dim)),
        }
    }

    fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let n = tape.layer_norm_rows(x, LAYER_NORM_EPS)?;
        let g = tape.mul_row(n, tape.param(store, self.gain))?;
        tape.add_row(g, tape.param(store, self.shift))
    }
}

#[derive(Clone, Debug)]
pub struct EncoderBlock {
    fc: Linear,
    attention: Attention,
    norm1: Norm,
    /// Feed-forward sublayer with its own normalization.
    ffn: Option<(Linear, Linear, Norm)>,
    out: Linear,
    tokens: usize,
    token_dim: usize,
}

impl EncoderBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: &EncoderConfig,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (t, dt) = (config.tokens, config.token_dim);
        let fc = Linear::new(store, &format!("{name}.fc"), d_in, t * dt, true, rng);
        let attention = Attention::new(store, &format!("{name}.attn"), dt, config.heads, rng);
        let norm1 = Norm::new(store, &format!("{name}.norm1"), dt);
        let ffn = config.ffn_enabled.then(|| {
            (
                Linear::new(
                    store,
                    &format!("{name}.ffn1"),
                    dt,
                    config.ffn_hidden,
                    true,
                    rng,
                ),
                Linear::new(
                    store,
                    &format!("{name}.ffn2"),
                    config.ffn_hidden,
                    dt,
                    true,
                    rng,
                ),
                Norm::new(store, &format!("{name}.norm2"), dt),
            )
        });
        let out = Linear::new(store, &format!("{name}.out"), t * dt, d_out, true, rng);
        Ok(EncoderBlock {
            fc,
            attention,
            norm1,
            ffn,
            out,
            tokens: t,
            token_dim: dt,
        })
    }

    pub fn d_in(&self) -> usize {
        self.fc.d_in
    }

    pub fn d_out(&self) -> usize {
        self.out.d_out
    }

    pub fn attention(&self) -> &Attention {
        &self.attention
    }

    /// Maps `K × d_in` pair inputs to `K × d_out`.
    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if x.cols() != self.fc.d_in {
            return Err(Error::shape(
                "encoder",
                format!(
                    "input width {} for encoder expecting {}",
                    x.cols(),
                    self.fc.d_in
                ),
            ));
        }
        let batch = x.rows();
        let z = self.fc.forward(tape, store, x)?;
        let tokens = tape.reshape(z, batch * self.tokens, self.token_dim)?;
        let attn = self.attention.forward(tape, store, tokens, self.tokens)?;
        let mut h = self
            .norm1
            .forward(tape, store, tape.add(tokens, attn.output)?)?;
        if let Some((f1, f2, norm2)) = &self.ffn {
            let inner = tape.relu(f1.forward(tape, store, h)?)?;
            let ff = f2.forward(tape, store, inner)?;
            h = norm2.forward(tape, store, tape.add(h, ff)?)?;
        }
        let flat = tape.reshape(h, batch, self.tokens * self.token_dim)?;
        self.out.forward(tape, store, flat)
    }
}
