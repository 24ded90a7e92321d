use std::path::Path;

use serde::Deserialize;
use stepkit_core::eval::ExternalCheckerSpec;
use stepkit_core::geometry::GeometryConfig;
use stepkit_core::reserialize::ReserializeOptions;
use stepkit_core::retrieval::DEFAULT_LOCAL_DIMENSION;

use crate::Usage;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerSection {
    pub command: Option<String>,
    pub timeout_s: f64,
}

impl Default for CheckerSection {
    fn default() -> Self {
        CheckerSection {
            command: None,
            timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub endpoint: Option<String>,
    pub model: String,
    pub dimension: usize,
    pub k: usize,
    pub timeout_s: f64,
    pub retries: u32,
}

impl Default for IndexSection {
    fn default() -> Self {
        IndexSection {
            endpoint: None,
            model: String::new(),
            dimension: DEFAULT_LOCAL_DIMENSION,
            k: 1,
            timeout_s: 30.0,
            retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    /// Batch worker threads, 0 for one per logical core.
    pub jobs: usize,
    pub max_entities: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            jobs: 0,
            max_entities: 500,
        }
    }
}

/// Contents of the `--config` TOML file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub reserialize: ReserializeOptions,
    pub checker: CheckerSection,
    pub index: IndexSection,
    pub limits: Limits,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("reading config {}: {e}", path.display())))?;
        let cfg: Config = toml::from_str(&text).map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Usage> {
        self.geometry.validate().map_err(|e| Usage(format!("config [geometry]: {e}")))?;
        self.reserialize.validate().map_err(|e| Usage(format!("config [reserialize]: {e}")))?;
        if !(self.checker.timeout_s > 0.0 && self.checker.timeout_s.is_finite()) {
            return Err(Usage("config [checker]: timeout_s must be positive".into()));
        }
        if self.index.k == 0 || self.index.dimension == 0 {
            return Err(Usage("config [index]: k and dimension must be positive".into()));
        }
        if !(self.index.timeout_s > 0.0 && self.index.timeout_s.is_finite()) {
            return Err(Usage("config [index]: timeout_s must be positive".into()));
        }
        if self.limits.max_entities == 0 {
            return Err(Usage("config [limits]: max_entities must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the checker from flag/env values layered over the file.
    pub fn checker(&self, command: Option<&str>, timeout_s: Option<f64>) -> Result<Option<ExternalCheckerSpec>, Usage> {
        let Some(command) = command.map(str::to_string).or_else(|| self.checker.command.clone()) else {
            return Ok(None);
        };
        let timeout = timeout_s.unwrap_or(self.checker.timeout_s);
        ExternalCheckerSpec::new(command, timeout)
            .map(Some)
            .map_err(|e| Usage(e.to_string()))
    }
}
