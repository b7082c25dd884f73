use std::path::{Path, PathBuf};

use pap_core::attack::AttackConfig;
use pap_core::diffusion::{ScheduleConfig, ToyDatasetSpec, TrainConfig};
use pap_core::eval::{EvalProtocol, SubjectSpec};
use pap_core::prompt::PhiConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

pub const SEED_ENV: &str = "PAP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ModelSection {
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct DatasetSection {
    pub toy: ToyDatasetSpec,
    /// The photo set exported for protection.
    pub subject: SubjectSpec,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub base: u64,
    /// Evaluation repeats, each on its own stream.
    pub eval: usize,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { base: 0, eval: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub dataset: DatasetSection,
    pub distribution: PhiConfig,
    pub attack: AttackConfig,
    pub eval: EvalProtocol,
    pub seeds: Seeds,
    pub output_dir: Option<PathBuf>,
}


impl RunConfig {
    /// Built-in defaults with the seed taken from `PAP_SEED` when set.
    pub fn defaults(env_seed: Option<&str>) -> CliResult<Self> {
        let mut cfg = Self::default();
        if let Some(s) = env_seed {
            cfg.seeds.base = s
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    /// Parse a config document. A manifest written by an earlier run is
    /// accepted too; its resolved config is used.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let value = match value.get("config_sha256") {
            Some(_) => value.get("config").cloned().unwrap_or_default(),
            None => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path, env_seed: Option<&str>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // The environment only replaces the built-in seed.
        if let Some(s) = env_seed {
            let raw: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
            let section = raw.get("config").unwrap_or(&raw);
            if section.pointer("/seeds/base").is_none() {
                cfg.seeds.base = Self::defaults(Some(s))?.seeds.base;
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.attack.validate()?;
        self.distribution.validate()?;
        self.eval.validate()?;
        self.dataset.toy.validate()?;
        self.model.schedule.build()?;
        let t = &self.model.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(CliError::Validation("model.train.lr must be positive".into()));
        }
        if t.hidden == 0 || t.time_dim == 0 || !t.time_dim.is_multiple_of(2) {
            return Err(CliError::Validation("model.train: hidden must be positive and time_dim even".into()));
        }
        if self.dataset.subject.photos == 0 {
            return Err(CliError::Validation("dataset.subject.photos must be positive".into()));
        }
        if self.dataset.subject.image_size != self.dataset.toy.image_size
            || self.dataset.subject.embed_dim != self.dataset.toy.embed_dim
        {
            return Err(CliError::Validation("dataset.subject must match dataset.toy image_size and embed_dim".into()));
        }
        if self.seeds.eval == 0 {
            return Err(CliError::Validation("seeds.eval must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}
