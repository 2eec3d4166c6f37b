//! Series manifest: which CSV files feed an episode and how to condition
//! them.
//!
//! ```toml
//! [[series]]
//! name = "cpi_official"
//! path = "cpi_official.csv"
//! source_kind = "official"
//! transform = "pct_change"
//! reliability = { timeliness = 0.5, revision_volatility = 0.2, crosscheck_error = 0.1 }
//!
//! [[series]]
//! name = "cpi_proxy"
//! path = "cpi_proxy.csv"
//! source_kind = "proxy"
//! transform = "pct_change"
//!
//! [[hybrid]]
//! name = "inflation"
//! actual = "cpi_official"
//! proxy = "cpi_proxy"
//! ```
//!
//! The fusion weight of a hybrid is its own `q` if given, otherwise the
//! reliability of the `actual` series.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataio::{
    fuse_hybrid, load_daily, load_series, reliability_score, to_monthly, Aggregation, ColumnSpec, MacroSeries,
    ReliabilityInputs, SourceKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    #[default]
    Monthly,
    Daily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Level,
    /// Month-over-month change `x_t / x_{t-1} - 1`, e.g. CPI to inflation.
    PctChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub unit: String,
    #[serde(default = "default_kind")]
    pub source_kind: SourceKind,
    #[serde(default)]
    pub frequency: Frequency,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default = "default_date")]
    pub date_column: String,
    #[serde(default = "default_value")]
    pub value_column: String,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub reliability: Option<ReliabilityInputs>,
}

fn default_kind() -> SourceKind {
    SourceKind::Official
}
fn default_date() -> String {
    "date".into()
}
fn default_value() -> String {
    "value".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridEntry {
    pub name: String,
    pub actual: String,
    pub proxy: String,
    #[serde(default)]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub series: Vec<SeriesEntry>,
    #[serde(default)]
    pub hybrid: Vec<HybridEntry>,
}

/// Loaded series keyed by name, plus the bytes read (for provenance).
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub series: BTreeMap<String, MacroSeries>,
    pub fusion_weights: BTreeMap<String, f64>,
    /// `(path, bytes)` of the manifest and every data file, in read order.
    pub inputs: Vec<(PathBuf, Vec<u8>)>,
}

fn data_err(stage: &'static str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data {
        stage,
        message: e.to_string(),
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("manifest: {e}")))
    }

    /// Reads every listed file and builds the hybrids.
    pub fn load(path: &Path) -> Result<LoadedPanel, PipelineError> {
        let raw = std::fs::read(path).map_err(|e| PipelineError::Config(format!("manifest {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw).map_err(|e| PipelineError::Config(format!("manifest {}: {e}", path.display())))?;
        let manifest = Self::parse(text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut inputs = vec![(path.to_path_buf(), raw)];
        let mut series = BTreeMap::new();
        for entry in &manifest.series {
            let file = if entry.path.is_absolute() {
                entry.path.clone()
            } else {
                base.join(&entry.path)
            };
            let s = entry.load(&file)?;
            inputs.push((file.clone(), std::fs::read(&file).map_err(|e| data_err("dataio", format!("{}: {e}", file.display())))?));
            if series.insert(entry.name.clone(), s).is_some() {
                return Err(PipelineError::Config(format!("manifest: series `{}` listed twice", entry.name)));
            }
        }
        let mut fusion_weights = BTreeMap::new();
        for h in &manifest.hybrid {
            let get = |n: &str| {
                series
                    .get(n)
                    .ok_or_else(|| PipelineError::Config(format!("manifest: hybrid `{}` references unknown series `{n}`", h.name)))
            };
            let (actual, proxy): (&MacroSeries, &MacroSeries) = (get(&h.actual)?, get(&h.proxy)?);
            let q = match h.q.or(actual.reliability) {
                Some(q) => q,
                None => {
                    return Err(PipelineError::Config(format!(
                        "manifest: hybrid `{}` needs `q` or a reliability score on `{}`",
                        h.name, h.actual
                    )))
                }
            };
            let mut fused = fuse_hybrid(actual, proxy, q).map_err(|e| match e {
                crate::dataio::DataError::WeightOutOfRange(_) => PipelineError::Config(format!("manifest: {e}")),
                e => data_err("dataio", e),
            })?;
            fused.name = h.name.clone();
            fusion_weights.insert(h.name.clone(), q);
            if series.insert(h.name.clone(), fused).is_some() {
                return Err(PipelineError::Config(format!("manifest: hybrid name `{}` collides with a series", h.name)));
            }
        }
        Ok(LoadedPanel {
            series,
            fusion_weights,
            inputs,
        })
    }
}

impl SeriesEntry {
    fn load(&self, file: &Path) -> Result<MacroSeries, PipelineError> {
        let columns = ColumnSpec {
            date: self.date_column.clone(),
            value: self.value_column.clone(),
        };
        let mut s = match self.frequency {
            Frequency::Monthly => load_series(file, &columns),
            Frequency::Daily => load_daily(file, &columns).and_then(|d| to_monthly(&d, self.aggregation)),
        }
        .map_err(|e| data_err("dataio", e))?;
        if self.transform == Transform::PctChange {
            s = s.pct_change(self.name.clone());
        }
        s.name = self.name.clone();
        s.unit = self.unit.clone();
        s.source_kind = self.source_kind;
        s.reliability = match (self.q, &self.reliability) {
            (Some(_), Some(_)) => {
                return Err(PipelineError::Config(format!("manifest: series `{}` gives both q and reliability", self.name)))
            }
            (Some(q), None) if (0.0..=1.0).contains(&q) => Some(q),
            (Some(q), None) => return Err(PipelineError::Config(format!("manifest: series `{}`: q = {q} outside [0, 1]", self.name))),
            (None, Some(r)) => Some(reliability_score(r).map_err(|e| PipelineError::Config(format!("manifest: series `{}`: {e}", self.name)))?),
            (None, None) => None,
        };
        Ok(s)
    }
}
