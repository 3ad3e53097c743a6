use serde::{Deserialize, Serialize};

use crate::encoders::{CnnConfig, EncoderConfig};
use crate::error::{Error, Result};
use crate::mvdsc::ViewKind;
use crate::numkit::AdamConfig;

/// Every hyperparameter of the model and its training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    /// Structure embedding width `d′`.
    pub d_embed: usize,
    /// Propagation hops `L` over the similarity graph.
    pub hops: usize,
    /// Output width of the CNN and encoders 2 to 4.
    pub d_att: usize,
    /// Output width of encoder 1.
    pub d_emb: usize,
    /// Heads `M` per clustering view.
    pub dsc_heads: usize,
    /// Clusters `C` per head.
    pub clusters: usize,
    /// Weight of the clustering regularizer.
    pub alpha: f64,
    pub rgcn_layers: usize,
    /// Projection width used to build each learned adjacency.
    pub adj_dim: usize,
    pub decoder_hidden: usize,
    pub encoder: EncoderConfig,
    pub cnn: CnnConfig,
    /// Clustering views in output order; empty feeds the comprehensive
    /// feature straight to the decoder.
    pub views: Vec<ViewKind>,
    pub mixup: bool,
    /// Symmetric Beta parameter for the mixing coefficient.
    pub mixup_beta: f64,
    /// Also train on the reversed copy of every pair.
    pub mirror_pairs: bool,
    /// Keep only the strongest `k` similarities per drug.
    pub dds_top_k: Option<usize>,
    pub radam: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            batch_size: 512,
            lr: 2e-5,
            dropout: 0.3,
            epochs: 120,
            d_embed: 500,
            hops: 0,
            d_att: 200,
            d_emb: 1500,
            dsc_heads: 5,
            clusters: 200,
            alpha: 0.2,
            rgcn_layers: 1,
            adj_dim: 64,
            decoder_hidden: 512,
            encoder: EncoderConfig::default(),
            cnn: CnnConfig::default(),
            views: ViewKind::ALL.to_vec(),
            mixup: true,
            mixup_beta: 1.0,
            mirror_pairs: false,
            dds_top_k: None,
            radam: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width of the comprehensive pair feature.
    pub fn feature_dim(&self) -> usize {
        4 * self.d_att + self.d_emb
    }

    /// Smallest batch the clustering views accept.
    pub fn min_batch(&self) -> usize {
        if self.views.is_empty() {
            1
        } else {
            self.clusters.max(2)
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            rectify: self.radam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("d_embed", self.d_embed),
            ("d_att", self.d_att),
            ("d_emb", self.d_emb),
            ("dsc_heads", self.dsc_heads),
            ("clusters", self.clusters),
            ("rgcn_layers", self.rgcn_layers),
            ("adj_dim", self.adj_dim),
            ("decoder_hidden", self.decoder_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Param(format!("{name} must be positive")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Param(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Param(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Param(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if self.mixup_beta.is_nan() || self.mixup_beta <= 0.0 {
            return Err(Error::Param(format!(
                "mixup_beta must be positive, got {}",
                self.mixup_beta
            )));
        }
        if self.batch_size < self.min_batch() {
            return Err(Error::Param(format!(
                "batch_size {} is below the {} pairs the clustering views need",
                self.batch_size,
                self.min_batch()
            )));
        }
        let mut seen = self.views.clone();
        seen.sort_by_key(|v| v.letter());
        seen.dedup();
        if seen.len() != self.views.len() {
            return Err(Error::Param("views must not repeat".into()));
        }
        if self.dds_top_k == Some(0) {
            return Err(Error::Param("dds_top_k must be positive when set".into()));
        }
        self.encoder.validate()?;
        self.cnn.validate(2 * crate::featurize::SMILES_LENGTH)?;
        Ok(())
    }
}
