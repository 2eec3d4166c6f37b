//! Run configuration: a versioned TOML file with one or more crisis
//! episodes.
//!
//! ```toml
//! version = 1
//! seed = 20180813
//!
//! [bootstrap]
//! replications = 1000
//!
//! [[episode]]
//! country = "Turkey"
//! crisis_date = "2018-08-13"
//! window_start = "2016-08"
//! window_end = "2024-11"
//! residency = ["local", "foreign"]
//! series_manifest = "manifest.toml"
//!
//! [episode.features]
//! base = ["inflation", "fx_change"]
//! interactions = [["inflation", "fx_change"]]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::hedge::Residency;
use crate::month::Month;
use crate::qreg::FeatureSchema;

pub const CONFIG_VERSION: u32 = 1;

/// Replication count of the `--fast` profile.
pub const FAST_REPLICATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(rename = "episode")]
    pub episodes: Vec<CrisisEpisode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// `None` selects `ceil(n^(1/3))`.
    #[serde(default)]
    pub block_length: Option<usize>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Refits for the attribution ranking stability; defaults to
    /// `replications`.
    #[serde(default)]
    pub stability_replications: Option<usize>,
}

fn default_replications() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            replications: default_replications(),
            block_length: None,
            level: default_level(),
            stability_replications: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    /// Defaults to half the usable rows.
    #[serde(default)]
    pub initial_window: Option<usize>,
    /// Defaults to a tenth of the usable rows.
    #[serde(default)]
    pub step: Option<usize>,
    #[serde(default = "default_true")]
    pub crisis_aware: bool,
}

fn default_true() -> bool {
    true
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            initial_window: None,
            step: None,
            crisis_aware: true,
        }
    }
}

/// Names of the manifest series playing each role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesRoles {
    #[serde(default = "role_index")]
    pub index: String,
    #[serde(default = "role_fx")]
    pub fx: String,
    /// Monthly inflation as a fraction.
    #[serde(default = "role_inflation")]
    pub inflation: String,
}

fn role_index() -> String {
    "index".into()
}
fn role_fx() -> String {
    "fx".into()
}
fn role_inflation() -> String {
    "inflation".into()
}

impl Default for SeriesRoles {
    fn default() -> Self {
        Self {
            index: role_index(),
            fx: role_fx(),
            inflation: role_inflation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrisisEpisode {
    pub country: String,
    /// `YYYY-MM-DD` or `YYYY-MM`; truncated to its month for computation.
    pub crisis_date: String,
    pub window_start: Month,
    pub window_end: Month,
    pub residency: Vec<Residency>,
    /// Relative paths resolve against the config file's directory.
    pub series_manifest: PathBuf,
    #[serde(default)]
    pub series: SeriesRoles,
    pub features: FeatureSchema,
    /// Quantiles at which to fit the regression instead of the selected
    /// triplet. Copula and hedge stages are unaffected.
    #[serde(default)]
    pub quantile_override: Option<Vec<f64>>,
}

impl CrisisEpisode {
    pub fn crisis_month(&self) -> Result<Month, PipelineError> {
        self.crisis_date
            .parse()
            .map_err(|e| PipelineError::Config(format!("{}: crisis_date: {e}", self.country)))
    }

    /// Residency profiles in canonical order, deduplicated.
    pub fn residencies(&self) -> Vec<Residency> {
        let mut r = self.residency.clone();
        r.sort();
        r.dedup();
        r
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |msg: String| Err(PipelineError::Config(format!("{}: {msg}", self.country)));
        if self.country.trim().is_empty() {
            return Err(PipelineError::Config("episode with empty country".into()));
        }
        if self.residency.is_empty() {
            return err("residency set is empty".into());
        }
        let crisis = self.crisis_month()?;
        if !(self.window_start < crisis && crisis <= self.window_end) {
            return err(format!(
                "window_start < crisis month <= window_end violated ({} / {crisis} / {})",
                self.window_start, self.window_end
            ));
        }
        self.features
            .validate()
            .map_err(|e| PipelineError::Config(format!("{}: features: {e}", self.country)))?;
        if let Some(taus) = &self.quantile_override {
            if taus.is_empty() {
                return err("quantile_override is empty".into());
            }
            if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                return err(format!("quantile_override entry {t} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != CONFIG_VERSION {
            return Err(PipelineError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.episodes.is_empty() {
            return Err(PipelineError::Config("no [[episode]] entries".into()));
        }
        let mut countries: Vec<&str> = self.episodes.iter().map(|e| e.country.as_str()).collect();
        countries.sort();
        if let Some(w) = countries.windows(2).find(|w| w[0] == w[1]) {
            return Err(PipelineError::Config(format!("country `{}` listed twice", w[0])));
        }
        let b = &self.bootstrap;
        if b.replications < 100 || b.stability_replications.is_some_and(|r| r < 2) {
            return Err(PipelineError::Config("bootstrap replications must be at least 100 (stability at least 2)".into()));
        }
        if !(b.level > 0.0 && b.level < 1.0) {
            return Err(PipelineError::Config(format!("bootstrap level {} outside (0, 1)", b.level)));
        }
        if b.block_length == Some(0) || self.cv.step == Some(0) {
            return Err(PipelineError::Config("block_length and cv.step must be positive".into()));
        }
        self.episodes.iter().try_for_each(CrisisEpisode::validate)
    }

    /// Replaces all replication counts with the `--fast` profile.
    pub fn fast(mut self) -> Self {
        self.bootstrap.replications = FAST_REPLICATIONS;
        self.bootstrap.stability_replications = Some(FAST_REPLICATIONS);
        self
    }
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// Raw bytes, hashed into the provenance record.
    pub raw: Vec<u8>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let config = RunConfig::parse(text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir, raw })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}
