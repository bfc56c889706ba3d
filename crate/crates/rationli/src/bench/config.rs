//! TOML configuration for model, trainer, and teacher defaults.
//!
//! Every field has a default, so a missing file or an empty one yields the
//! standard setup. CLI flags override whatever the file says; that merge
//! lives in the binary, this module only loads and interprets.

use serde::{Deserialize, Serialize};
use std::io;
use std::path::{Path, PathBuf};

use crate::seq2seq::ModelConfig;
use crate::teacher::{TeacherEndpoint, TeacherError};
use crate::trainer::{DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_EVALS_PER_EPOCH};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// Model-shape overrides; unset fields keep the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub d_model: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub max_len: Option<usize>,
    pub dropout: Option<f64>,
}

impl ModelSection {
    /// Defaults plus overrides, for the given vocabulary.
    pub fn build(&self, vocab_size: usize) -> ModelConfig {
        let mut cfg = ModelConfig::with_vocab(vocab_size);
        if let Some(v) = self.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = self.n_layers {
            cfg.n_layers = v;
        }
        if let Some(v) = self.n_heads {
            cfg.n_heads = v;
        }
        if let Some(v) = self.d_ff {
            cfg.d_ff = v;
        }
        if let Some(v) = self.max_len {
            cfg.max_len = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        cfg
    }

    /// The sequence-length budget, known before any vocabulary exists.
    pub fn max_len(&self) -> usize {
        self.max_len
            .unwrap_or_else(|| ModelConfig::with_vocab(crate::textkit::vocab::RESERVED).max_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub evals_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainerSection {
    fn default() -> TrainerSection {
        TrainerSection {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            evals_per_epoch: DEFAULT_EVALS_PER_EPOCH,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSection {
    /// `fixture:<path>` or an http(s) chat-completions URL.
    pub mode: String,
    /// Model name sent with http requests.
    pub model: String,
    pub workers: usize,
    pub cache: PathBuf,
}

impl Default for TeacherSection {
    fn default() -> TeacherSection {
        TeacherSection {
            mode: String::new(),
            model: "gpt-3.5-turbo".to_string(),
            workers: 4,
            cache: PathBuf::from("teacher_cache.jsonl"),
        }
    }
}

impl TeacherSection {
    /// Interpret `mode` as an endpoint. Empty mode is an error: augmenting
    /// requires an explicit choice between fixture and live teacher.
    pub fn endpoint(&self) -> Result<TeacherEndpoint, ConfigError> {
        if let Some(path) = self.mode.strip_prefix("fixture:") {
            return Ok(TeacherEndpoint::fixture_from_path(path)?);
        }
        if self.mode.starts_with("http://") || self.mode.starts_with("https://") {
            return Ok(TeacherEndpoint::http(&self.mode, &self.model));
        }
        Err(ConfigError::Invalid(format!(
            "teacher.mode must be \"fixture:<path>\" or an http(s) URL, got {:?}",
            self.mode
        )))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub model: ModelSection,
    pub trainer: TrainerSection,
    pub teacher: TeacherSection,
}

/// Load a config file; a missing path yields the defaults.
pub fn load_config(path: Option<&Path>) -> Result<BenchConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(BenchConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}
