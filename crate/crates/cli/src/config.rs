//! Optional TOML run configuration. Every key mirrors a CLI flag and
//! command-line flags always win over file values.

use std::path::PathBuf;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub annotations: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub slot_db: Option<PathBuf>,
    pub category: Option<Vec<String>>,
    pub supercategory: Option<String>,
    pub ratio_tol: Option<f64>,
    pub scale_tol: Option<f64>,
    pub category_mode: Option<String>,
    pub seed: Option<u64>,
    pub emit_per_slot: Option<bool>,
    pub select_step: Option<usize>,
    pub jobs: Option<usize>,
    pub lenient: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> anyhow::Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))
            }
        }
    }
}
