//! JSON run configuration: scene spec, training hyperparameters, and output
//! paths. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub model: PathBuf,
    pub log: PathBuf,
    pub psnr_plot: PathBuf,
    pub count_plot: PathBuf,
    /// Directory for periodic checkpoints; unset disables them.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            model: PathBuf::from("out/model.ply"),
            log: PathBuf::from("out/train_log.jsonl"),
            psnr_plot: PathBuf::from("out/psnr.svg"),
            count_plot: PathBuf::from("out/count.svg"),
            checkpoint_dir: None,
        }
    }
}

/// SH degree the trainable model stores (the init model is built with it).
fn default_sh_degree() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub train: TrainConfig,
    pub sh_degree: usize,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneSpec::default(),
            train: TrainConfig::default(),
            sh_degree: default_sh_degree(),
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.train.validate()?;
        if self.sh_degree > crate::sh::MAX_DEGREE {
            return Err(Error::Config(format!(
                "sh_degree {} exceeds maximum {}",
                self.sh_degree,
                crate::sh::MAX_DEGREE
            )));
        }
        Ok(())
    }
}
