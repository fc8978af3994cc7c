use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::TaskKind;
use crate::decode::DecodeConfig;
use crate::encoding::{DistanceNorm, PairSet, DEFAULT_BASE, DEFAULT_PLATEAU_FRACTION};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Where training and test pairs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic task; ignored when `train_source` is set.
    pub task: TaskKind,
    pub n_samples: usize,
    /// Held-out pairs split off the end of the synthetic corpus.
    pub n_test: usize,
    /// Vocabulary size of synthetic tasks, reserved ids included.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Held-out pairs scored at every log interval.
    pub eval_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_source: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_target: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_source: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_target: Option<PathBuf>,
    /// Tag inventories, one tag per line; the Penn set when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_tagset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_tagset: Option<PathBuf>,
    pub min_freq: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_vocab: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            task: TaskKind::Copy,
            n_samples: 5200,
            n_test: 200,
            vocab_size: 50,
            min_len: 1,
            max_len: 12,
            eval_size: 100,
            train_source: None,
            train_target: None,
            test_source: None,
            test_target: None,
            source_tagset: None,
            target_tagset: None,
            min_freq: 1,
            max_vocab: None,
        }
    }
}

/// Settings of the positional-encoding analysis commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub d_model: usize,
    pub max_len: usize,
    pub k_max: u64,
    pub base: f64,
    pub norm: DistanceNorm,
    pub pairs: PairSet,
    pub plateau_fraction: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            d_model: 128,
            max_len: 100,
            k_max: 2000,
            base: DEFAULT_BASE,
            norm: DistanceNorm::L2,
            pairs: PairSet::All,
            plateau_fraction: DEFAULT_PLATEAU_FRACTION,
        }
    }
}

/// Every module setting plus the global seed, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data synthesis, initialization and batch sampling.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            data: DataConfig::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            decode: DecodeConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration next to a command's outputs.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Checks every section and copies the global seed into the trainer.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.train.validate()?;
        self.decode.validate()?;
        let d = &self.data;
        if d.min_len == 0 || d.min_len > d.max_len {
            return Err(Error::Config(format!("invalid data length range {}..={}", d.min_len, d.max_len)));
        }
        if d.train_source.is_some() != d.train_target.is_some() {
            return Err(Error::Config("train_source and train_target must be given together".into()));
        }
        if d.test_source.is_some() != d.test_target.is_some() {
            return Err(Error::Config("test_source and test_target must be given together".into()));
        }
        Ok(self)
    }
}
