//! Run configuration: a preset, overlaid by a TOML file, overlaid by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use hmgrl::eval::Task;
use hmgrl::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::presets::{preset, PRESET_NAMES};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Preset the model section started from.
    pub preset: String,
    pub drugs: PathBuf,
    pub ddis: PathBuf,
    pub task: Task,
    pub folds: usize,
    /// Folds to run; empty runs all of them.
    pub only_folds: Vec<usize>,
    pub split_seed: u64,
    /// Average AUPR and AUC per class instead of over the pooled matrix.
    pub macro_auc: bool,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "d1-task1".into(),
            drugs: "data/drugs.tsv".into(),
            ddis: "data/ddis.tsv".into(),
            task: Task::KnownDrugs,
            folds: 5,
            only_folds: Vec::new(),
            split_seed: 0,
            macro_auc: false,
            output_dir: "run".into(),
            model: preset("d1-task1").expect("built-in preset"),
        }
    }
}

/// Values given on the command line; `None` leaves the file value alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub drugs: Option<PathBuf>,
    pub ddis: Option<PathBuf>,
    pub task: Option<u8>,
    pub folds: Option<usize>,
    pub only_folds: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub no_mixup: bool,
    pub macro_auc: bool,
    pub output_dir: Option<PathBuf>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn preset_or_err(name: &str) -> Result<ModelConfig> {
    preset(name).with_context(|| {
        format!(
            "unknown preset `{name}`; known: {}",
            PRESET_NAMES.join(", ")
        )
    })
}

impl RunConfig {
    /// Resolves the effective configuration. The preset is the flag value,
    /// else the file's `preset` key, else the default.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        Self::resolve_inner(file, overrides).map_err(|e| CliError::Config(format!("{e:#}")).into())
    }

    fn resolve_inner(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let file_value: Option<toml::Value> = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Some(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
            }
            None => None,
        };
        let file_preset = file_value
            .as_ref()
            .and_then(|v| v.get("preset"))
            .and_then(|v| v.as_str());
        let name = overrides
            .preset
            .as_deref()
            .or(file_preset)
            .unwrap_or("d1-task1")
            .to_string();
        let base = RunConfig {
            preset: name.clone(),
            model: preset_or_err(&name)?,
            ..RunConfig::default()
        };
        let mut value = toml::Value::try_from(&base)?;
        if let Some(mut v) = file_value {
            if let Some(t) = v.as_table_mut() {
                t.remove("preset");
            }
            merge(&mut value, v);
        }
        let mut cfg: RunConfig = value.try_into().context("invalid configuration")?;
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = &o.drugs {
            self.drugs = v.clone();
        }
        if let Some(v) = &o.ddis {
            self.ddis = v.clone();
        }
        if let Some(v) = o.task {
            self.task = Task::try_from(v)?;
        }
        if let Some(v) = o.folds {
            self.folds = v;
        }
        if let Some(v) = &o.only_folds {
            self.only_folds = v.clone();
        }
        if let Some(v) = o.seed {
            self.split_seed = v;
            self.model.seed = v;
        }
        if let Some(v) = o.epochs {
            self.model.epochs = v;
        }
        if let Some(v) = o.lr {
            self.model.lr = v;
        }
        if let Some(v) = o.batch_size {
            self.model.batch_size = v;
        }
        if o.no_mixup {
            self.model.mixup = false;
        }
        if o.macro_auc {
            self.macro_auc = true;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            bail!("folds must be at least 2, got {}", self.folds);
        }
        if let Some(f) = self.only_folds.iter().find(|&&f| f >= self.folds) {
            bail!("fold {f} does not exist with {} folds", self.folds);
        }
        self.model.validate()?;
        Ok(())
    }

    /// Fold indices this run covers.
    pub fn selected_folds(&self) -> Vec<usize> {
        if self.only_folds.is_empty() {
            (0..self.folds).collect()
        } else {
            let mut f = self.only_folds.clone();
            f.sort_unstable();
            f.dedup();
            f
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let parsed = toml::from_str::<RunConfig>(text).map_err(anyhow::Error::from);
        let cfg = parsed.and_then(|c| c.validate().map(|_| c));
        cfg.map_err(|e| CliError::Config(format!("{e:#}")).into())
    }
}
