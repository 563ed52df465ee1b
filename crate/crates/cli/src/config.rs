use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use stap_core::config::Tolerances;
use stap_core::ingest::FilterConfig;
use stap_core::simulator::SimulationConfig;
use stap_core::verifier::DEFAULT_MAX_CYCLE_LEN;

/// Settings read from a `--config` TOML file. Command-line flags win over
/// anything set here.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pools: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_cycle_len: usize,
    pub filter: FilterConfig,
    pub tolerances: Tolerances,
    pub simulation: SimulationConfig,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            pools: None,
            prices: None,
            mapping: None,
            seed: None,
            max_cycle_len: DEFAULT_MAX_CYCLE_LEN,
            filter: FilterConfig::default(),
            tolerances: Tolerances::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // Relative input paths are taken from the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.pools, &mut config.prices, &mut config.mapping].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}
