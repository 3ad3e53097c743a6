use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Context, HmgrlModel, ModelConfig};
use crate::error::{Error, Result};
use crate::featurize::DescriptorSizes;
use crate::graphcore::DdiRecord;
use crate::numkit::Checkpoint;

/// Everything besides parameter values needed to rebuild a model and the
/// graph it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub num_drugs: usize,
    pub num_events: usize,
    pub sizes: DescriptorSizes,
    pub edges: Vec<DdiRecord>,
}

impl HmgrlModel {
    pub fn to_checkpoint(&self, ctx: &Context) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            num_drugs: self.num_drugs,
            num_events: self.num_events,
            sizes: self.sizes,
            edges: ctx.edges.clone(),
        };
        let json = serde_json::to_string(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Checkpoint::from_store(json, &self.store))
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<(Self, CheckpointMeta)> {
        let meta: CheckpointMeta = serde_json::from_str(&ckpt.metadata)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut model = HmgrlModel::new(
            meta.config.clone(),
            meta.num_drugs,
            meta.num_events,
            meta.sizes,
        )?;
        model.store.load_values(ckpt.tensors)?;
        Ok((model, meta))
    }

    pub fn save(&self, ctx: &Context, path: &Path) -> Result<()> {
        self.to_checkpoint(ctx)?.save(path)
    }

    /// Loads a model; the returned metadata carries the training edges for
    /// rebuilding its [`Context`].
    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}
