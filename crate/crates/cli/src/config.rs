//! Run configuration: one TOML file covering data generation, training and
//! evaluation. Every field has a default, so an empty file is valid.

use std::fs;
use std::path::{Path, PathBuf};

use contramatch::eval::SpectralConfig;
use contramatch::{SyntheticConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides both `data.seed` and `train.seed` when set.
    pub seed: Option<u64>,
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    pub spectral: SpectralConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))?;
        if let Some(seed) = cfg.seed {
            cfg.data.seed = seed;
            cfg.train.seed = seed;
        }
        cfg.data
            .validate()
            .map_err(|e| CliError::Config(format!("{}: [data] {e}", origin.display())))?;
        cfg.train
            .validate()
            .map_err(|e| CliError::Config(format!("{}: [train] {e}", origin.display())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Loads `path`, or the defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Writes the fully resolved configuration next to `output`.
    pub fn echo_next_to(&self, output: &Path) -> Result<PathBuf, CliError> {
        let path = sibling(output, "config.toml");
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        crate::write_file(&path, &text)?;
        Ok(path)
    }
}

/// `dir/name.ext` becomes `dir/name.suffix`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
