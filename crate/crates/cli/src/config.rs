use std::path::Path;

use anyhow::{Context, Result};
use kgqa_core::dataset::GenerateConfig;
use kgqa_core::kge::TrainConfig;
use kgqa_core::qa::QaConfig;
use kgqa_core::question::ClassifierConfig;
use kgqa_service::ServiceConfig;
use serde::Deserialize;

/// Contents of the `--config` TOML file. Every key is optional; command-line
/// flags and `KGQA_*` environment variables take precedence.
///
/// ```toml
/// seed = 7
///
/// [pipeline]
/// triples = "data/triples.tsv"
/// nodes = "data/nodes.tsv"
/// kge = "model/kge.bin"
/// classifier = "model/classifier.bin"
/// encoders = { 1 = "model/enc1.bin", 2 = "model/enc2.bin", 3 = "model/enc3.bin" }
///
/// [kge]
/// dim = 64
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub pipeline: ServiceConfig,
    pub kge: TrainConfig,
    pub classifier: ClassifierConfig,
    pub qa: QaConfig,
    pub generate: GenerateConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}
