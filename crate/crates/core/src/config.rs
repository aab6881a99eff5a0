//! Run configuration: one versioned JSON file shared by every subcommand,
//! with command-line flags overriding individual fields.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changemap::{Connectivity, RegionFilter};
use crate::instructgen::{BuildConfig, LlmSettings, TaskType};
use crate::llmclient::{Backend, ClientOptions, LlmClient};
use crate::metrics::CategoryLexicon;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("connectivity must be 4 or 8, got {0}")]
    Connectivity(u8),
    #[error("threshold must lie in [0, 1), got {0}")]
    Threshold(f64),
    #[error("grid must lie in 1..=3, got {0}")]
    Grid(u32),
    #[error("category ids must be 0-255 strings, got {0:?}")]
    CategoryId(String),
    #[error("category dictionary must include id 0 (\"no change\")")]
    MissingNoChange,
    #[error("remote backend requires an endpoint")]
    MissingEndpoint,
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub masks_dir: PathBuf,
    pub captions: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeMapConfig {
    #[serde(default = "default_connectivity")]
    pub connectivity: u8,
    #[serde(default)]
    pub min_area: usize,
    #[serde(default = "default_grid")]
    pub grid: u32,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_decimals")]
    pub contour_decimals: u32,
}

impl Default for ChangeMapConfig {
    fn default() -> Self {
        Self {
            connectivity: default_connectivity(),
            min_area: 0,
            grid: default_grid(),
            threshold: default_threshold(),
            contour_decimals: default_decimals(),
        }
    }
}

fn default_connectivity() -> u8 {
    8
}

fn default_grid() -> u32 {
    3
}

fn default_threshold() -> f64 {
    0.05
}

fn default_decimals() -> u32 {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    None,
    Mock,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::None,
            model: default_model(),
            endpoint: None,
            api_key_env: default_api_key_env(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_retries: default_max_retries(),
            concurrency: default_concurrency(),
        }
    }
}

fn default_model() -> String {
    "gpt-3.5-turbo".to_string()
}

fn default_api_key_env() -> String {
    "RSCA_API_KEY".to_string()
}

fn default_max_tokens() -> u32 {
    768
}

fn default_max_retries() -> u32 {
    2
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenerationConfig {
    #[serde(default)]
    pub seed: u64,
    /// Enabled task types; all six when omitted.
    #[serde(default)]
    pub tasks: Option<Vec<TaskType>>,
    #[serde(default)]
    pub llm: LlmConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub paths: PathsConfig,
    #[serde(default)]
    pub changemap: ChangeMapConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default = "default_categories")]
    pub categories: BTreeMap<String, String>,
}

fn default_categories() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("0".to_string(), "none".to_string()),
        ("1".to_string(), "road".to_string()),
        ("2".to_string(), "building".to_string()),
    ])
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if ![4u8, 8].contains(&self.changemap.connectivity) {
            return Err(ConfigError::Connectivity(self.changemap.connectivity));
        }
        if !(0.0..1.0).contains(&self.changemap.threshold) {
            return Err(ConfigError::Threshold(self.changemap.threshold));
        }
        if !(1..=3).contains(&self.changemap.grid) {
            return Err(ConfigError::Grid(self.changemap.grid));
        }
        let dict = self.category_dict()?;
        if !dict.contains_key(&0) {
            return Err(ConfigError::MissingNoChange);
        }
        if self.generation.llm.backend == BackendKind::Remote
            && self.generation.llm.endpoint.is_none()
        {
            return Err(ConfigError::MissingEndpoint);
        }
        Ok(())
    }

    pub fn category_dict(&self) -> Result<BTreeMap<u8, String>, ConfigError> {
        self.categories
            .iter()
            .map(|(k, v)| {
                k.parse::<u8>()
                    .map(|id| (id, v.clone()))
                    .map_err(|_| ConfigError::CategoryId(k.clone()))
            })
            .collect()
    }

    pub fn region_filter(&self) -> RegionFilter {
        RegionFilter {
            connectivity: if self.changemap.connectivity == 4 {
                Connectivity::Four
            } else {
                Connectivity::Eight
            },
            min_area: self.changemap.min_area,
        }
    }

    /// Parser lexicon over the configured category names in id order.
    pub fn lexicon(&self) -> Result<CategoryLexicon, ConfigError> {
        let dict = self.category_dict()?;
        let names: Vec<&str> = dict
            .iter()
            .filter(|(&id, _)| id != 0)
            .map(|(_, name)| name.as_str())
            .collect();
        Ok(CategoryLexicon::new(&names))
    }

    /// Dataset build settings; `output_dir`, `seed`, and `threads` may be
    /// overridden by flags.
    pub fn build_config(
        &self,
        output_dir: Option<PathBuf>,
        seed: Option<u64>,
        threads: usize,
    ) -> Result<BuildConfig, ConfigError> {
        let tasks: BTreeSet<TaskType> = match &self.generation.tasks {
            Some(list) => list.iter().copied().collect(),
            None => TaskType::ALL.into_iter().collect(),
        };
        Ok(BuildConfig {
            masks_dir: self.paths.masks_dir.clone(),
            captions_path: self.paths.captions.clone(),
            output_dir: output_dir.unwrap_or_else(|| self.paths.output_dir.clone()),
            categories: self.category_dict()?,
            filter: self.region_filter(),
            grid: self.changemap.grid,
            threshold: self.changemap.threshold,
            contour_decimals: self.changemap.contour_decimals,
            seed: seed.unwrap_or(self.generation.seed),
            tasks,
            llm: LlmSettings {
                model: self.generation.llm.model.clone(),
                temperature: self.generation.llm.temperature,
                max_tokens: self.generation.llm.max_tokens,
            },
            threads,
        })
    }

    /// Builds the chat client for the configured backend; `None` when the
    /// backend is `none` (open-ended QA is then skipped). The remote
    /// credential comes from the environment variable named in the config.
    pub fn make_llm_client(&self, seed: Option<u64>) -> Result<Option<LlmClient>, ConfigError> {
        let llm = &self.generation.llm;
        let backend = match llm.backend {
            BackendKind::None => return Ok(None),
            BackendKind::Mock => Backend::Mock {
                seed: seed.unwrap_or(self.generation.seed),
            },
            BackendKind::Remote => {
                let endpoint = llm.endpoint.clone().ok_or(ConfigError::MissingEndpoint)?;
                let api_key = std::env::var(&llm.api_key_env)
                    .map_err(|_| ConfigError::MissingCredential(llm.api_key_env.clone()))?;
                Backend::Remote { endpoint, api_key }
            }
        };
        Ok(Some(LlmClient::new(
            backend,
            ClientOptions {
                max_retries: llm.max_retries,
                backoff: Duration::from_millis(250),
                concurrency: llm.concurrency,
                cache_dir: self.paths.cache_dir.clone(),
            },
        )))
    }
}
