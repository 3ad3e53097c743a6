//! Named hyperparameter sets.
//!
//! The published rows list the CNN/encoder widths under column headers that
//! read `d_att, d_emb` with Task 1 values `1500, 200`, while the accompanying
//! prose sets `d_att = 200` (CNN and attribute encoders) and `d_emb = 1500`
//! (embedding encoder) for Task 1. The presets follow the prose; the two
//! values only differ for Task 1.
//!
//! | preset   | bs   | lr   | dr  | te  | d′  | L | d_att | d_emb | M | C   | α   |
//! |----------|------|------|-----|-----|-----|---|-------|-------|---|-----|-----|
//! | d1-task1 | 512  | 2e-5 | 0.3 | 120 | 500 | 0 | 200   | 1500  | 5 | 200 | 0.2 |
//! | d1-task2 | 1024 | 5e-6 | 0.2 | 120 | 500 | 3 | 800   | 800   | 5 | 400 | 0.5 |
//! | d1-task3 | 1024 | 5e-6 | 0.3 | 120 | 500 | 3 | 800   | 800   | 5 | 400 | 0.5 |
//! | d2-task1 | 1024 | 2e-5 | 0.3 | 150 | 500 | 0 | 200   | 1500  | 5 | 400 | 0.2 |
//! | d2-task2 | 1024 | 5e-6 | 0.4 | 150 | 500 | 3 | 800   | 800   | 5 | 400 | 0.5 |
//! | d2-task3 | 1024 | 5e-6 | 0.4 | 150 | 500 | 3 | 800   | 800   | 5 | 400 | 0.5 |
//!
//! Desk-scale presets, for datasets of tens of drugs:
//!
//! | preset | bs | lr   | dr  | te  | d′ | L | d_att | d_emb | M | C | α   |
//! |--------|----|------|-----|-----|----|---|-------|-------|---|---|-----|
//! | micro  | 8  | 1e-2 | 0.0 | 20  | 8  | 1 | 8     | 8     | 2 | 4 | 0.5 |
//! | small  | 64 | 3e-3 | 0.1 | 150 | 32 | 0 | 16    | 32    | 2 | 8 | 0.2 |

use hmgrl::encoders::{CnnConfig, EncoderConfig};
use hmgrl::model::ModelConfig;

pub const PRESET_NAMES: [&str; 8] = [
    "d1-task1", "d1-task2", "d1-task3", "d2-task1", "d2-task2", "d2-task3", "micro", "small",
];

#[allow(clippy::too_many_arguments)]
fn row(
    bs: usize,
    lr: f64,
    dr: f64,
    te: usize,
    d: usize,
    l: usize,
    att: usize,
    emb: usize,
    m: usize,
    c: usize,
    a: f64,
) -> ModelConfig {
    ModelConfig {
        batch_size: bs,
        lr,
        dropout: dr,
        epochs: te,
        d_embed: d,
        hops: l,
        d_att: att,
        d_emb: emb,
        dsc_heads: m,
        clusters: c,
        alpha: a,
        ..ModelConfig::default()
    }
}

pub fn preset(name: &str) -> Option<ModelConfig> {
    Some(match name {
        "d1-task1" => row(512, 2e-5, 0.3, 120, 500, 0, 200, 1500, 5, 200, 0.2),
        "d1-task2" => row(1024, 5e-6, 0.2, 120, 500, 3, 800, 800, 5, 400, 0.5),
        "d1-task3" => row(1024, 5e-6, 0.3, 120, 500, 3, 800, 800, 5, 400, 0.5),
        "d2-task1" => row(1024, 2e-5, 0.3, 150, 500, 0, 200, 1500, 5, 400, 0.2),
        "d2-task2" => row(1024, 5e-6, 0.4, 150, 500, 3, 800, 800, 5, 400, 0.5),
        "d2-task3" => row(1024, 5e-6, 0.4, 150, 500, 3, 800, 800, 5, 400, 0.5),
        "micro" => ModelConfig {
            adj_dim: 8,
            decoder_hidden: 8,
            encoder: EncoderConfig {
                tokens: 2,
                heads: 2,
                token_dim: 4,
                ffn_enabled: true,
                ffn_hidden: 8,
            },
            cnn: CnnConfig {
                channels: vec![8, 8, 8],
                kernels: vec![4, 6, 8],
            },
            ..row(8, 1e-2, 0.0, 20, 8, 1, 8, 8, 2, 4, 0.5)
        },
        "small" => ModelConfig {
            adj_dim: 16,
            decoder_hidden: 64,
            encoder: EncoderConfig {
                tokens: 4,
                heads: 2,
                token_dim: 16,
                ffn_enabled: true,
                ffn_hidden: 32,
            },
            cnn: CnnConfig {
                channels: vec![8, 8, 8],
                kernels: vec![4, 6, 8],
            },
            ..row(64, 3e-3, 0.1, 150, 32, 0, 16, 32, 2, 8, 0.2)
        },
        _ => return None,
    })
}
