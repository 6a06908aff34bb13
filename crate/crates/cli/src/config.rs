//! Run configuration file: `[data]`, `[model]`, `[train]` and `[eval]`
//! sections in TOML. Unknown keys are rejected and relative paths are
//! resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use affectgan_core::data_pipeline::{LldSource, NoiseSpec, VAL_SPLIT};
use affectgan_core::models::ModelSpec;
use affectgan_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub manifest: PathBuf,
    pub lld_source: LldSource,
    pub noise: NoiseSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { manifest: PathBuf::from("manifest.json"), lld_source: LldSource::Fallback, noise: NoiseSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Split used for validation during training and by default in `eval`.
    pub split: String,
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { split: VAL_SPLIT.to_owned(), batch_size: 32 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Copy with every relative path anchored at `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let mut c = self.clone();
        c.data.manifest = anchor(base, &c.data.manifest);
        c.data.lld_source = match &c.data.lld_source {
            LldSource::Fallback => LldSource::Fallback,
            LldSource::Vectors(d) => LldSource::Vectors(anchor(base, d)),
            LldSource::Precomputed(d) => LldSource::Precomputed(anchor(base, d)),
        };
        c
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        self.model.validate()?;
        self.data.noise.validate()?;
        if self.eval.batch_size == 0 {
            return Err(CliError::Config("eval.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// SHA-256 over the canonical JSON form of any serialisable config.
pub fn config_hash<S: Serialize>(config: &S) -> String {
    let json = serde_json::to_vec(config).expect("config serialises");
    Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
}
