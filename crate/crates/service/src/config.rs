use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kgqa_core::qa::{PipelinePaths, DEFAULT_TOP_K};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("missing setting: {0}")]
    Missing(&'static str),
}

/// Prefix of every environment override, e.g. `KGQA_BIND`.
pub const ENV_PREFIX: &str = "KGQA_";

/// Service settings. Every field can be set in the TOML file and overridden
/// by an environment variable named after it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// `KGQA_BIND`
    pub bind: Option<String>,
    /// `KGQA_TRIPLES`
    pub triples: Option<PathBuf>,
    /// `KGQA_NODES`
    pub nodes: Option<PathBuf>,
    /// `KGQA_SYNONYMS`
    pub synonyms: Option<PathBuf>,
    /// `KGQA_KGE`
    pub kge: Option<PathBuf>,
    /// `KGQA_CLASSIFIER`
    pub classifier: Option<PathBuf>,
    /// `KGQA_ENCODER_1`, `KGQA_ENCODER_2`, `KGQA_ENCODER_3`
    pub encoders: BTreeMap<String, PathBuf>,
    /// `KGQA_DEFAULT_TOP_K`
    pub default_top_k: Option<usize>,
    /// `KGQA_TOP_K_CAP`
    pub top_k_cap: Option<usize>,
}

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_TOP_K_CAP: usize = 100;

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Applies `KGQA_*` overrides from `vars`; unrelated keys are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (key, value) in vars {
            let Some(name) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let value: String = value.into();
            let count = |v: &str| {
                v.parse::<usize>().map_err(|e| ConfigError::Value {
                    key: key.as_ref().to_owned(),
                    message: e.to_string(),
                })
            };
            match name {
                "BIND" => self.bind = Some(value),
                "TRIPLES" => self.triples = Some(value.into()),
                "NODES" => self.nodes = Some(value.into()),
                "SYNONYMS" => self.synonyms = Some(value.into()),
                "KGE" => self.kge = Some(value.into()),
                "CLASSIFIER" => self.classifier = Some(value.into()),
                "DEFAULT_TOP_K" => self.default_top_k = Some(count(&value)?),
                "TOP_K_CAP" => self.top_k_cap = Some(count(&value)?),
                other => {
                    if let Some(hops) = other.strip_prefix("ENCODER_") {
                        self.encoders.insert(hops.to_owned(), value.into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads the optional config file, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    /// Fills unset fields from `other`.
    pub fn or(mut self, other: ServiceConfig) -> Self {
        self.bind = self.bind.or(other.bind);
        self.triples = self.triples.or(other.triples);
        self.nodes = self.nodes.or(other.nodes);
        self.synonyms = self.synonyms.or(other.synonyms);
        self.kge = self.kge.or(other.kge);
        self.classifier = self.classifier.or(other.classifier);
        for (k, v) in other.encoders {
            self.encoders.entry(k).or_insert(v);
        }
        self.default_top_k = self.default_top_k.or(other.default_top_k);
        self.top_k_cap = self.top_k_cap.or(other.top_k_cap);
        self
    }

    pub fn bind_address(&self) -> &str {
        self.bind.as_deref().unwrap_or(DEFAULT_BIND)
    }

    pub fn limits(&self) -> Result<Limits, ConfigError> {
        let limits = Limits {
            default_top_k: self.default_top_k.unwrap_or(DEFAULT_TOP_K),
            top_k_cap: self.top_k_cap.unwrap_or(DEFAULT_TOP_K_CAP),
        };
        if limits.top_k_cap == 0 || limits.default_top_k == 0 || limits.default_top_k > limits.top_k_cap {
            return Err(ConfigError::Value {
                key: "default_top_k".into(),
                message: format!(
                    "must lie in 1..={}, got {}",
                    limits.top_k_cap, limits.default_top_k
                ),
            });
        }
        Ok(limits)
    }

    pub fn pipeline_paths(&self) -> Result<PipelinePaths, ConfigError> {
        let mut encoders = BTreeMap::new();
        for (hops, path) in &self.encoders {
            let h: u8 = hops.parse().map_err(|_| ConfigError::Value {
                key: format!("encoders.{hops}"),
                message: "hop class must be 1, 2 or 3".into(),
            })?;
            if !(1..=3).contains(&h) {
                return Err(ConfigError::Value {
                    key: format!("encoders.{hops}"),
                    message: "hop class must be 1, 2 or 3".into(),
                });
            }
            encoders.insert(h, path.clone());
        }
        Ok(PipelinePaths {
            triples: self.triples.clone().ok_or(ConfigError::Missing("triples"))?,
            nodes: self.nodes.clone(),
            synonyms: self.synonyms.clone(),
            kge: self.kge.clone().ok_or(ConfigError::Missing("kge"))?,
            classifier: self.classifier.clone().ok_or(ConfigError::Missing("classifier"))?,
            encoders,
        })
    }
}

/// Answer-count bounds for `/ask`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub default_top_k: usize,
    pub top_k_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            default_top_k: DEFAULT_TOP_K,
            top_k_cap: DEFAULT_TOP_K_CAP,
        }
    }
}
