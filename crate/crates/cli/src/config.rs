//! Run configuration: defaults per dataset, JSON config files, and CLI
//! overrides, resolved in that order of precedence.

use rescnn_core::error::{Error, Result};
use rescnn_core::model::ResCnnConfig;
use rescnn_core::optim::LrSchedule;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Environment variable consulted when no data root is given explicitly.
pub const DATA_ROOT_ENV: &str = "RESCNN_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Bonn,
    Bern,
    Synthetic,
}

impl Dataset {
    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Bonn => "bonn",
            Dataset::Bern => "bern",
            Dataset::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonn" => Ok(Dataset::Bonn),
            "bern" => Ok(Dataset::Bern),
            "synthetic" => Ok(Dataset::Synthetic),
            other => Err(Error::config(format!(
                "unknown dataset '{other}' (expected bonn, bern or synthetic)"
            ))),
        }
    }
}

/// Fully resolved run configuration. The snapshot written next to the run
/// artifacts is exactly this structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub data_root: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub crop_len: usize,
    pub schedule: LrSchedule,
    pub model: ResCnnConfig,
    /// Stop after the first epoch whose validation accuracy reaches this.
    pub early_stop_val_acc: Option<f64>,
}

impl RunConfig {
    /// Training recipe defaults: batch 20, lr 0.01 decayed by 0.1 at epochs
    /// 10/30/50, 60 epochs, dataset-specific crop and model geometry.
    pub fn defaults(dataset: Dataset) -> RunConfig {
        let (crop_len, model, epochs) = match dataset {
            Dataset::Bonn => (3800, ResCnnConfig::bonn(), 60),
            Dataset::Bern => (9800, ResCnnConfig::bern(), 60),
            Dataset::Synthetic => (
                crate::synth::SYNTH_CROP,
                crate::synth::model_config(),
                20,
            ),
        };
        RunConfig {
            dataset,
            data_root: None,
            output_dir: PathBuf::from("run"),
            seed: 42,
            epochs,
            batch_size: 20,
            crop_len,
            schedule: LrSchedule::default(),
            model,
            early_stop_val_acc: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| Error::config(format!("model: {e}")))?;
        self.schedule
            .validate()
            .map_err(|e| Error::config(format!("schedule: {e}")))?;
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.crop_len != self.model.input_length {
            return Err(Error::config(format!(
                "crop_len {} must equal the model input_length {}",
                self.crop_len, self.model.input_length
            )));
        }
        let max_crop = match self.dataset {
            Dataset::Bonn => rescnn_core::data::BONN_SEGMENT_LEN,
            Dataset::Bern => rescnn_core::data::BERN_SEGMENT_LEN,
            Dataset::Synthetic => crate::synth::SYNTH_LEN,
        };
        if self.crop_len > max_crop {
            return Err(Error::config(format!(
                "crop_len {} exceeds the {} segment length {max_crop}",
                self.crop_len,
                self.dataset.name()
            )));
        }
        if self.dataset != Dataset::Synthetic && self.data_root.is_none() {
            return Err(Error::config(format!(
                "dataset {} needs a data root (--data-root, config file, or ${DATA_ROOT_ENV})",
                self.dataset.name()
            )));
        }
        if let Some(th) = self.early_stop_val_acc {
            if !(0.0..=1.0).contains(&th) {
                return Err(Error::config("early_stop_val_acc must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Partial configuration as read from a JSON file; any field may be absent.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigPatch {
    pub dataset: Option<Dataset>,
    pub data_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub crop_len: Option<usize>,
    pub schedule: Option<LrSchedule>,
    pub model: Option<ModelPatch>,
    pub early_stop_val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPatch {
    pub input_length: Option<usize>,
    pub input_channels: Option<usize>,
    pub n_classes: Option<usize>,
    pub kernel_size: Option<usize>,
    pub block_channels: Option<[usize; 2]>,
    pub pool_window: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub lrelu_alpha: Option<f64>,
    pub fc_hidden: Option<usize>,
    pub bn_momentum: Option<f64>,
    pub bn_eps: Option<f64>,
}

impl RunConfigPatch {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn apply_to(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.data_root {
            cfg.data_root = Some(v.clone());
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.crop_len {
            cfg.crop_len = v;
            cfg.model.input_length = v;
        }
        if let Some(v) = &self.schedule {
            cfg.schedule = v.clone();
        }
        if let Some(v) = self.early_stop_val_acc {
            cfg.early_stop_val_acc = Some(v);
        }
        if let Some(m) = &self.model {
            let target = &mut cfg.model;
            if let Some(v) = m.input_length {
                target.input_length = v;
                cfg.crop_len = v;
            }
            if let Some(v) = m.input_channels {
                target.input_channels = v;
            }
            if let Some(v) = m.n_classes {
                target.n_classes = v;
            }
            if let Some(v) = m.kernel_size {
                target.kernel_size = v;
            }
            if let Some(v) = m.block_channels {
                target.block_channels = v;
            }
            if let Some(v) = m.pool_window {
                target.pool_window = v;
            }
            if let Some(v) = m.dropout_rate {
                target.dropout_rate = v;
            }
            if let Some(v) = m.lrelu_alpha {
                target.lrelu_alpha = v;
            }
            if let Some(v) = m.fc_hidden {
                target.fc_hidden = v;
            }
            if let Some(v) = m.bn_momentum {
                target.bn_momentum = v;
            }
            if let Some(v) = m.bn_eps {
                target.bn_eps = v;
            }
        }
    }
}

/// CLI-level overrides; they win over both defaults and the config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub data_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

/// Resolve a full RunConfig from defaults, then the optional config file,
/// then CLI overrides, then the environment data root as a last resort.
pub fn resolve_config(
    dataset_flag: Option<&str>,
    config_path: Option<&Path>,
    overrides: &CliOverrides,
) -> Result<RunConfig> {
    let patch = match config_path {
        Some(p) => RunConfigPatch::load(p)?,
        None => RunConfigPatch::default(),
    };
    let dataset = match (dataset_flag, patch.dataset) {
        (Some(flag), _) => Dataset::parse(flag)?,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(Error::config(
                "no dataset selected: pass --dataset or set it in the config file",
            ))
        }
    };
    let mut cfg = RunConfig::defaults(dataset);
    patch.apply_to(&mut cfg);
    if let Some(v) = &overrides.data_root {
        cfg.data_root = Some(v.clone());
    }
    if let Some(v) = &overrides.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = overrides.seed {
        cfg.seed = v;
    }
    if let Some(v) = overrides.epochs {
        cfg.epochs = v;
    }
    if cfg.data_root.is_none() {
        if let Ok(root) = std::env::var(DATA_ROOT_ENV) {
            if !root.is_empty() {
                cfg.data_root = Some(PathBuf::from(root));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
