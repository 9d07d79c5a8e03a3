//! TOML configuration shared by the CLI and the session service.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, CacheMode, RecognitionCache, DEFAULT_THRESHOLD};
use crate::context::{ContextError, PromptTemplates};
use crate::features::FeatureConfig;
use crate::gateway::{BackendConfig, ChainMode, ConfigError, Gateway, RemoteBackend, RuleBackend};
use crate::keyframe::KeyframeConfig;
use crate::pipeline::{DispatchMode, FramePipeline, Interpreter, PipelineConfig};
use crate::router::{RegistryError, TaskRegistry};

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] ConfigError),
    #[error(transparent)]
    Templates(#[from] ContextError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Rules,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendChoice,
    #[serde(flatten)]
    pub remote: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub mode: ChainMode,
    /// Directory with prompt template overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    /// In-memory only when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_entries: Option<usize>,
    pub mode: CacheMode,
}

impl Default for CacheSection {
    fn default() -> Self {
        Self {
            path: None,
            threshold: DEFAULT_THRESHOLD,
            max_entries: None,
            mode: CacheMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterSection {
    /// Built-in registry when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub mode: DispatchMode,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".to_string(),
            mode: DispatchMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub features: FeatureConfig,
    pub keyframes: KeyframeConfig,
    pub backend: BackendSection,
    pub chain: ChainSection,
    pub cache: CacheSection,
    pub router: RouterSection,
    pub service: ServiceSection,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, SettingsError> {
        let settings: Self = toml::from_str(text)?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        let p = &self.pipeline;
        if !(0.0..=1.0).contains(&p.min_confidence) {
            return Err(SettingsError::Invalid("pipeline.min_confidence must be in [0, 1]".into()));
        }
        if p.window == 0 {
            return Err(SettingsError::Invalid("pipeline.window must be positive".into()));
        }
        let t = self.cache.threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(SettingsError::Invalid("cache.threshold must be in (0, 1]".into()));
        }
        if self.keyframes.timeout_us == 0 {
            return Err(SettingsError::Invalid("keyframes.timeout_us must be positive".into()));
        }
        if self.backend.kind == BackendChoice::Remote {
            self.backend.remote.validate()?;
        }
        Ok(())
    }

    pub fn frame_pipeline(&self) -> FramePipeline {
        FramePipeline::new(self.pipeline, self.features, self.keyframes)
    }

    pub fn templates(&self) -> Result<PromptTemplates, SettingsError> {
        Ok(match &self.chain.templates {
            Some(dir) => PromptTemplates::load_overrides(dir)?,
            None => PromptTemplates::default(),
        })
    }

    pub fn gateway(&self) -> Result<Gateway, SettingsError> {
        let gateway = match self.backend.kind {
            BackendChoice::Rules => Gateway::new(Arc::new(RuleBackend)),
            BackendChoice::Remote => {
                Gateway::new(Arc::new(RemoteBackend::new(self.backend.remote.clone())?))
            }
        };
        Ok(gateway.with_templates(self.templates()?).with_mode(self.chain.mode))
    }

    /// Opens the configured cache, or `None` when caching is off.
    pub fn open_cache(&self) -> Result<Option<RecognitionCache>, SettingsError> {
        if self.cache.mode == CacheMode::Off {
            return Ok(None);
        }
        Ok(Some(match &self.cache.path {
            Some(path) => RecognitionCache::open(path, self.cache.max_entries)?,
            None => RecognitionCache::in_memory().with_max_entries(self.cache.max_entries),
        }))
    }

    pub fn interpreter(&self) -> Result<Interpreter, SettingsError> {
        let interpreter = Interpreter::new(Arc::new(self.gateway()?));
        Ok(match self.open_cache()? {
            Some(cache) => interpreter.with_cache(Arc::new(cache), self.cache.mode, self.cache.threshold),
            None => interpreter,
        })
    }

    pub fn registry(&self) -> Result<TaskRegistry, SettingsError> {
        Ok(match &self.router.registry {
            Some(path) => TaskRegistry::load(path)?,
            None => TaskRegistry::default(),
        })
    }
}
