//! Run configuration: defaults, TOML files, and flag overrides.
//!
//! Precedence is defaults, then the `--config` file, then explicit flags.
//! The resolved configuration has a canonical identity string that is
//! embedded in checkpoints; a resumed run must present the same identity
//! so training never silently continues under different hyperparameters.
//! The identity deliberately excludes the epoch target, which is exactly
//! the knob a resume is allowed to move.

use serde::{Deserialize, Serialize};
use srx_core::data::Dataset;
use srx_core::error::{Result, SrxError};
use srx_core::matching::{MatchConfig, Mining, Pairing};
use srx_core::model::ModelConfig;
use srx_core::train::TrainOptions;
use srx_core::visual_encoder::LevelConfig;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub margin: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub d_model: usize,
    pub heads: usize,
    pub gcn_layers: usize,
    pub pairing: String,
    pub mining: String,
    pub features_mode: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            margin: 0.2,
            epochs: 100,
            batch_size: 32,
            lr: 0.05,
            d_model: 64,
            heads: 4,
            gcn_layers: 2,
            pairing: Pairing::default().to_string_form(),
            mining: Mining::HardestInBatch.as_str().to_string(),
            features_mode: "full".to_string(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.match_config()?.validate()?;
        LevelConfig::from_mode(&self.features_mode)?;
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(SrxError::config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.gcn_layers == 0 {
            return Err(SrxError::config("gcn_layers must be at least 1"));
        }
        Ok(())
    }

    pub fn match_config(&self) -> Result<MatchConfig> {
        Ok(MatchConfig {
            margin: self.margin,
            pairing: Pairing::parse(&self.pairing)?,
            mining: Mining::parse(&self.mining)?,
        })
    }

    /// Model dimensions come from the dataset; everything else from here.
    pub fn model_config(&self, data: &Dataset) -> Result<ModelConfig> {
        Ok(ModelConfig {
            d_model: self.d_model,
            heads: self.heads,
            gcn_layers: self.gcn_layers,
            word_dim: data.words.dim(),
            width: data.width,
            n_relations: data.n_relations,
            levels: LevelConfig::from_mode(&self.features_mode)?,
        })
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        let opts = TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            match_cfg: self.match_config()?,
        };
        opts.validate()?;
        Ok(opts)
    }

    /// Canonical form stored in checkpoints and compared on resume.
    /// Everything except the epoch target, rendered field by field so the
    /// bytes never depend on serializer ordering.
    pub fn identity(&self) -> String {
        format!(
            "seed = {}\nmargin = {}\nbatch_size = {}\nlr = {}\nd_model = {}\nheads = {}\n\
             gcn_layers = {}\npairing = \"{}\"\nmining = \"{}\"\nfeatures_mode = \"{}\"\n",
            self.seed,
            self.margin,
            self.batch_size,
            self.lr,
            self.d_model,
            self.heads,
            self.gcn_layers,
            self.pairing,
            self.mining,
            self.features_mode
        )
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text)
        .map_err(|e| SrxError::format(e.span().map(|s| s.start).unwrap_or(0), e.message().to_string()))
}

/// Shared hyperparameter flags; every `None` falls back to the config file
/// value (or the built-in default when no file is given).
#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML run configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for model initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ranking margin.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Training epoch target.
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Captions per training batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// SGD learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Shared embedding width.
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Attention heads per block.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Graph-convolution layers in the text encoder.
    #[arg(long)]
    pub gcn_layers: Option<usize>,
    /// Role-to-level assignment as "event,actions,entities" level names.
    #[arg(long)]
    pub pairing: Option<String>,
    /// Negative mining: "hardest" or "sum".
    #[arg(long)]
    pub mining: Option<String>,
    /// Feature combination: "full", "2d", "2d3d-seq", or "2d3d-feat".
    #[arg(long)]
    pub features_mode: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.margin {
            cfg.margin = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = self.heads {
            cfg.heads = v;
        }
        if let Some(v) = self.gcn_layers {
            cfg.gcn_layers = v;
        }
        if let Some(v) = &self.pairing {
            cfg.pairing = v.clone();
        }
        if let Some(v) = &self.mining {
            cfg.mining = v.clone();
        }
        if let Some(v) = &self.features_mode {
            cfg.features_mode = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
