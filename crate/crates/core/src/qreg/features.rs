//! Feature schema and design-matrix construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::QregError;
use crate::dataio::MacroSeries;
use crate::month::Month;

/// Identifiers with this prefix (case-insensitive) are equity-derived and may
/// never enter a design matrix.
pub const RESERVED_PREFIX: &str = "equity";

/// A column identifier that has passed the endogeneity guard.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct FeatureId(String);

impl FeatureId {
    pub fn new(name: &str, excluded: &[String]) -> Result<Self, QregError> {
        if name.to_ascii_lowercase().starts_with(RESERVED_PREFIX) || excluded.iter().any(|e| e == name) {
            return Err(QregError::EndogenousFeature(name.to_string()));
        }
        if name.is_empty() {
            return Err(QregError::InvalidSchema("empty feature identifier".into()));
        }
        Ok(Self(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDummy {
    pub name: String,
    /// Lags in months; 0 is the contemporaneous indicator.
    #[serde(default = "default_dummy_lags")]
    pub lags: Vec<u32>,
}

fn default_dummy_lags() -> Vec<u32> {
    vec![0]
}

/// Declared regressors.
///
/// Every `base` feature contributes its contemporaneous column; `lags` adds
/// `{name}_lag{k}` columns (also for series not listed in `base`). Event
/// dummies must be 0/1 series and are never standardized. Interaction pairs
/// name generated columns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    #[serde(default)]
    pub base: Vec<String>,
    #[serde(default)]
    pub lags: BTreeMap<String, Vec<u32>>,
    #[serde(default)]
    pub dummies: Vec<EventDummy>,
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    #[serde(default)]
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Dummy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub id: FeatureId,
    pub source: String,
    pub lag: u32,
    pub kind: ColumnKind,
}

pub fn lag_name(source: &str, lag: u32) -> String {
    if lag == 0 {
        source.to_string()
    } else {
        format!("{source}_lag{lag}")
    }
}

impl FeatureSchema {
    /// Generated columns in deterministic order, after the endogeneity guard.
    pub fn columns(&self) -> Result<Vec<Column>, QregError> {
        let mut out: Vec<Column> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut push = |source: &str, lag: u32, kind: ColumnKind, out: &mut Vec<Column>| -> Result<(), QregError> {
            FeatureId::new(source, &self.excluded)?;
            let id = FeatureId::new(&lag_name(source, lag), &self.excluded)?;
            if !seen.insert(id.clone()) {
                return Err(QregError::InvalidSchema(format!("duplicate column `{id}`")));
            }
            out.push(Column {
                id,
                source: source.to_string(),
                lag,
                kind,
            });
            Ok(())
        };
        for f in &self.base {
            push(f, 0, ColumnKind::Continuous, &mut out)?;
            if let Some(lags) = self.lags.get(f) {
                for &k in sorted_lags(lags).iter().filter(|&&k| k > 0) {
                    push(f, k, ColumnKind::Continuous, &mut out)?;
                }
            }
        }
        for (f, lags) in &self.lags {
            if self.base.contains(f) {
                continue;
            }
            for k in sorted_lags(lags) {
                push(f, k, ColumnKind::Continuous, &mut out)?;
            }
        }
        for d in &self.dummies {
            for k in sorted_lags(&d.lags) {
                push(&d.name, k, ColumnKind::Dummy, &mut out)?;
            }
        }
        Ok(out)
    }

    /// Interaction pairs resolved to column positions.
    pub fn interaction_indices(&self, columns: &[Column]) -> Result<Vec<(usize, usize)>, QregError> {
        let pos = |name: &str| -> Result<usize, QregError> {
            FeatureId::new(name, &self.excluded)?;
            columns
                .iter()
                .position(|c| c.id.as_str() == name)
                .ok_or_else(|| QregError::InvalidSchema(format!("interaction references unknown column `{name}`")))
        };
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b) in &self.interactions {
            let (i, j) = (pos(a)?, pos(b)?);
            if i == j {
                return Err(QregError::InvalidSchema(format!("self-interaction `{a}`")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(QregError::InvalidSchema(format!("duplicate interaction ({a}, {b})")));
            }
            out.push((i, j));
        }
        Ok(out)
    }

    /// Validates without touching data.
    pub fn validate(&self) -> Result<(), QregError> {
        let cols = self.columns()?;
        self.interaction_indices(&cols)?;
        Ok(())
    }

    /// Panel series the schema reads.
    pub fn sources(&self) -> BTreeSet<String> {
        let mut s: BTreeSet<String> = self.base.iter().cloned().collect();
        s.extend(self.lags.keys().cloned());
        s.extend(self.dummies.iter().map(|d| d.name.clone()));
        s
    }
}

fn sorted_lags(lags: &[u32]) -> Vec<u32> {
    let mut v = lags.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Raw (unstandardized) base columns plus the target, on months where every
/// column and the target are observed. Interaction columns are materialized
/// at fit time from standardized parents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignMatrix {
    pub months: Vec<Month>,
    pub columns: Vec<Column>,
    /// Row-major, `months.len()` rows by `columns.len()`.
    pub values: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub interactions: Vec<(usize, usize)>,
    pub schema: FeatureSchema,
    pub dropped_rows: usize,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.months.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.id.to_string()).collect()
    }

    pub fn interaction_names(&self) -> Vec<(String, String)> {
        self.interactions
            .iter()
            .map(|&(i, j)| (self.columns[i].id.to_string(), self.columns[j].id.to_string()))
            .collect()
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            months: self.months[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
            target: self.target[start..end].to_vec(),
            columns: self.columns.clone(),
            interactions: self.interactions.clone(),
            schema: self.schema.clone(),
            dropped_rows: 0,
        }
    }

    /// Rows by index, in the given order (used by resampling).
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            months: rows.iter().map(|&i| self.months[i]).collect(),
            values: rows.iter().map(|&i| self.values[i].clone()).collect(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            columns: self.columns.clone(),
            interactions: self.interactions.clone(),
            schema: self.schema.clone(),
            dropped_rows: 0,
        }
    }

    /// Row restricted to `start..=end` months.
    pub fn window(&self, start: Month, end: Month) -> Self {
        let lo = self.months.partition_point(|m| *m < start);
        let hi = self.months.partition_point(|m| *m <= end);
        self.slice(lo, hi.max(lo))
    }
}

/// Builds lagged, dummy and interaction-ready columns from a panel of
/// monthly series. The target series must be present under `target`.
pub fn engineer_features(
    panel: &BTreeMap<String, MacroSeries>,
    schema: &FeatureSchema,
    target: &str,
) -> Result<DesignMatrix, QregError> {
    let columns = schema.columns()?;
    let interactions = schema.interaction_indices(&columns)?;
    for src in schema.sources() {
        if !panel.contains_key(&src) {
            return Err(QregError::MissingSeries(src));
        }
    }
    for d in &schema.dummies {
        if let Some((m, v)) = panel[&d.name].iter().find(|(_, v)| *v != 0.0 && *v != 1.0) {
            return Err(QregError::NonBinaryDummy {
                name: d.name.clone(),
                month: m,
                value: v,
            });
        }
    }
    let y = panel.get(target).ok_or_else(|| QregError::MissingSeries(target.to_string()))?;

    let mut months = Vec::new();
    let mut values = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0usize;
    'rows: for (m, yv) in y.iter() {
        let mut row = Vec::with_capacity(columns.len());
        for c in &columns {
            match panel[&c.source].get(m.offset(-(c.lag as i64))) {
                Some(v) => row.push(v),
                None => {
                    dropped += 1;
                    continue 'rows;
                }
            }
        }
        months.push(m);
        values.push(row);
        targets.push(yv);
    }
    if dropped > 0 {
        log::warn!("design matrix: dropped {dropped} row(s) with missing lagged inputs");
    }
    Ok(DesignMatrix {
        months,
        columns,
        values,
        target: targets,
        interactions,
        schema: schema.clone(),
        dropped_rows: dropped,
    })
}

/// Elementwise product of two (already standardized) columns.
pub fn interaction_column(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}
