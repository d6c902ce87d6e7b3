//! JSON checkpoints of a run: configuration, model, optimizer state and step.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use ncgru_core::network::{Network, Trainer};

use crate::config::ExperimentConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub step: u64,
    pub config: ExperimentConfig,
    pub network: Network,
    pub trainer: Trainer,
}

impl Checkpoint {
    pub fn new(step: u64, config: &ExperimentConfig, network: &Network, trainer: &Trainer) -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            step,
            config: config.clone(),
            network: network.clone(),
            trainer: trainer.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ensure!(ck.version == FORMAT_VERSION, "checkpoint version {} unsupported", ck.version);
        ck.network.validate()?;
        ck.trainer.check(&ck.network)?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("loading {}", path.display()))
    }
}
