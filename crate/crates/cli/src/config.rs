//! Optional TOML config file. Every key is optional; flags override it and
//! built-in defaults fill the rest.

use std::path::Path;

use anyhow::Result;
use docket::corpusgen::{ClassSpec, MixEntry};
use serde::Deserialize;

use crate::usage;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub detect: DetectSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub seed: Option<u64>,
    pub docs_per_class: Option<usize>,
    pub n_rfes: Option<usize>,
    pub ocr_noise_rate: Option<f64>,
    pub classes: Option<Vec<ClassSpec>>,
    pub attack_mix: Option<Vec<MixEntry>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub channel: Option<String>,
    pub test_fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub l2: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    pub tau: Option<f64>,
    pub attack: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }
}
