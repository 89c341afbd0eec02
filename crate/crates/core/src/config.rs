//! Run configuration read from a TOML file. Command-line flags override
//! file values. Credentials never appear here: only the names of the
//! environment variables holding them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entailment::LexicalMeasure;
use crate::llm::{ReplayMode, SamplingParams, DEFAULT_MODEL};
use crate::pipeline::RankingFallback;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub model: String,
    /// Full URL of a chat-completions route.
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub params: SamplingParams,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            model: DEFAULT_MODEL.into(),
            endpoint: None,
            api_key_env: None,
            params: SamplingParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    pub dir: Option<PathBuf>,
    pub mode: Option<ReplayMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntailmentBackendKind {
    /// Token-overlap labels.
    Lexical,
    /// A model already trained on the NLI service (`nli_model`).
    Remote,
    /// Leave-one-out fine-tuning on the NLI service; needs gold.
    Loo,
    /// Leave-one-out protocol with the lexical stand-in service.
    LooLexical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntailmentSection {
    pub backend: EntailmentBackendKind,
    pub threshold: f64,
    pub measure: LexicalMeasure,
    pub endpoint: Option<String>,
    pub token_env: Option<String>,
    pub model_id: Option<String>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EntailmentSection {
    fn default() -> Self {
        EntailmentSection {
            backend: EntailmentBackendKind::Lexical,
            threshold: 0.2,
            measure: LexicalMeasure::Coverage,
            endpoint: None,
            token_env: None,
            model_id: None,
            learning_rate: 2e-2,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingBackendKind {
    Hashing,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub backend: EmbeddingBackendKind,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            backend: EmbeddingBackendKind::Hashing,
            dim: 256,
            endpoint: None,
            model: None,
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub prompt: String,
    pub refinement: bool,
    pub filtering: bool,
    pub batch_token_budget: usize,
    pub ranking_fallback: RankingFallback,
    pub templates: Option<PathBuf>,
    pub domain: Option<String>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            prompt: "P30".into(),
            refinement: true,
            filtering: true,
            batch_token_budget: 100_000,
            ranking_fallback: RankingFallback::Retry,
            templates: None,
            domain: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub pipeline: PipelineSection,
    pub llm: LlmSection,
    pub replay: ReplaySection,
    pub entailment: EntailmentSection,
    pub embedding: EmbeddingSection,
}

impl CliConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut cfg.dataset);
        fix(&mut cfg.out);
        fix(&mut cfg.replay.dir);
        fix(&mut cfg.pipeline.templates);
        Ok(cfg)
    }
}
