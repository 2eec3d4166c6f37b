//! Monthly macro series: CSV ingestion, frequency conversion, source
//! reliability scoring, and reliability-weighted fusion of official and proxy
//! series.
//!
//! A [`MacroSeries`] stores its observations in a `BTreeMap<Month, f64>`, so
//! the ordering and uniqueness invariants hold by construction. Missing months
//! are simply absent keys.
//!
//! Reliability components are expected to be normalized to `[0, 1]` by the
//! caller. A reasonable choice is min-max scaling across all candidate sources
//! for the same indicator, with timeliness oriented so that 1 means "published
//! first".

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::month::{Day, Month};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: file not found")]
    FileNotFound { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: malformed row {row}: {reason}")]
    MalformedRow { path: PathBuf, row: u64, reason: String },
    #[error("{series}: duplicate month {month}")]
    DuplicateMonth { series: String, month: Month },
    #[error("{series}: non-finite value at {month}")]
    NonFiniteValue { series: String, month: Month },
    #[error("{series}: series is empty")]
    EmptySeries { series: String },
    #[error("{series}: linear interpolation cannot fill {edge} gap before/after coverage ({month})")]
    ExtrapolationRequired {
        series: String,
        edge: &'static str,
        month: Month,
    },
    #[error("reliability component `{component}` = {value} outside [0, 1]")]
    ComponentOutOfRange { component: &'static str, value: f64 },
    #[error("fusion weight q = {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("fusion of `{actual}` and `{proxy}` has no observations")]
    EmptyFusion { actual: String, proxy: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Official,
    Proxy,
    Hybrid,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Official => "official",
            SourceKind::Proxy => "proxy",
            SourceKind::Hybrid => "hybrid",
        })
    }
}

/// A monthly scalar series with provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSeries {
    pub name: String,
    pub unit: String,
    pub source_kind: SourceKind,
    pub reliability: Option<f64>,
    observations: BTreeMap<Month, f64>,
    /// Per-month origin for fused series; empty otherwise.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    origins: BTreeMap<Month, SourceKind>,
}

impl MacroSeries {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, source_kind: SourceKind) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            source_kind,
            reliability: None,
            observations: BTreeMap::new(),
            origins: BTreeMap::new(),
        }
    }

    /// Builds a series from `(month, value)` pairs, rejecting duplicates and
    /// non-finite values.
    pub fn from_pairs(
        name: impl Into<String>,
        source_kind: SourceKind,
        pairs: impl IntoIterator<Item = (Month, f64)>,
    ) -> Result<Self, DataError> {
        let mut s = Self::new(name, "", source_kind);
        for (m, v) in pairs {
            s.insert(m, v)?;
        }
        Ok(s)
    }

    /// Consecutive months starting at `start`.
    pub fn from_values(name: impl Into<String>, source_kind: SourceKind, start: Month, values: &[f64]) -> Self {
        let mut s = Self::new(name, "", source_kind);
        for (i, &v) in values.iter().enumerate() {
            s.observations.insert(start.offset(i as i64), v);
        }
        s
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn insert(&mut self, month: Month, value: f64) -> Result<(), DataError> {
        if !value.is_finite() {
            return Err(DataError::NonFiniteValue {
                series: self.name.clone(),
                month,
            });
        }
        if self.observations.insert(month, value).is_some() {
            return Err(DataError::DuplicateMonth {
                series: self.name.clone(),
                month,
            });
        }
        Ok(())
    }

    pub fn get(&self, month: Month) -> Option<f64> {
        self.observations.get(&month).copied()
    }

    pub fn origin(&self, month: Month) -> Option<SourceKind> {
        self.origins.get(&month).copied().or_else(|| self.get(month).map(|_| self.source_kind))
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Month, f64)> + '_ {
        self.observations.iter().map(|(m, v)| (*m, *v))
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        self.observations.keys().copied()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.values().copied().collect()
    }

    pub fn first_month(&self) -> Option<Month> {
        self.observations.keys().next().copied()
    }

    pub fn last_month(&self) -> Option<Month> {
        self.observations.keys().next_back().copied()
    }

    /// Observations with `start <= month <= end`.
    pub fn window(&self, start: Month, end: Month) -> Self {
        let mut out = self.clone();
        out.observations = self.observations.range(start..=end).map(|(m, v)| (*m, *v)).collect();
        out.origins = self.origins.range(start..=end).map(|(m, k)| (*m, *k)).collect();
        out
    }

    /// Month-over-month relative change `x_t / x_{t-1} - 1`, defined only
    /// where both consecutive months are present.
    pub fn pct_change(&self, name: impl Into<String>) -> Self {
        let mut out = Self::new(name, "fraction", self.source_kind);
        for (m, v) in self.iter() {
            if let Some(prev) = self.get(m.prev()) {
                out.observations.insert(m, v / prev - 1.0);
            }
        }
        out
    }
}

/// Sub-monthly (e.g. daily) observations awaiting conversion by [`to_monthly`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    pub name: String,
    pub unit: String,
    pub source_kind: SourceKind,
    pub observations: Vec<(Day, f64)>,
}

/// CSV column mapping for [`load_series`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    #[serde(default = "default_date_column")]
    pub date: String,
    #[serde(default = "default_value_column")]
    pub value: String,
}

fn default_date_column() -> String {
    "date".into()
}

fn default_value_column() -> String {
    "value".into()
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            date: default_date_column(),
            value: default_value_column(),
        }
    }
}

struct RawRow {
    row: u64,
    date: String,
    value: f64,
}

fn read_rows(path: &Path, columns: &ColumnSpec) -> Result<Vec<RawRow>, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound { path: path.to_path_buf() });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let date_idx = find(&columns.date)?;
    let value_idx = find(&columns.value)?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |reason: String| DataError::MalformedRow {
            path: path.to_path_buf(),
            row,
            reason,
        };
        let date = rec.get(date_idx).ok_or_else(|| malformed("missing date field".into()))?;
        let raw_value = rec.get(value_idx).unwrap_or("");
        if raw_value.is_empty() {
            // gap, not a sentinel
            continue;
        }
        let value: f64 = raw_value
            .parse()
            .map_err(|_| malformed(format!("value `{raw_value}` is not a decimal number")))?;
        if !value.is_finite() {
            return Err(malformed(format!("value `{raw_value}` is not finite")));
        }
        rows.push(RawRow {
            row,
            date: date.to_string(),
            value,
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> DataError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_path_buf(),
                source,
            },
            _ => unreachable!(),
        },
        _ => DataError::MalformedRow {
            path: path.to_path_buf(),
            row: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        },
    }
}

fn series_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads a monthly series. Dates may carry a day component, which is
/// truncated; two rows falling in the same month are a hard error.
pub fn load_series(path: impl AsRef<Path>, columns: &ColumnSpec) -> Result<MacroSeries, DataError> {
    let path = path.as_ref();
    let mut series = MacroSeries::new(series_name(path), "", SourceKind::Official);
    for r in read_rows(path, columns)? {
        let month: Month = r.date.parse().map_err(|e: crate::month::MonthParseError| DataError::MalformedRow {
            path: path.to_path_buf(),
            row: r.row,
            reason: e.to_string(),
        })?;
        series.insert(month, r.value)?;
    }
    Ok(series)
}

/// Loads day-precision observations, sorted by date. Duplicate dates are an
/// error.
pub fn load_daily(path: impl AsRef<Path>, columns: &ColumnSpec) -> Result<DatedSeries, DataError> {
    let path = path.as_ref();
    let mut obs = Vec::new();
    for r in read_rows(path, columns)? {
        let day: Day = r.date.parse().map_err(|e: crate::month::MonthParseError| DataError::MalformedRow {
            path: path.to_path_buf(),
            row: r.row,
            reason: e.to_string(),
        })?;
        obs.push((day, r.value));
    }
    obs.sort_by_key(|o| o.0);
    if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DataError::DuplicateMonth {
            series: series_name(path),
            month: w[0].0.month,
        });
    }
    Ok(DatedSeries {
        name: series_name(path),
        unit: String::new(),
        source_kind: SourceKind::Official,
        observations: obs,
    })
}

/// Writes `date,value` CSV. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn save_series(series: &MacroSeries, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::from("date,value\n");
    for (m, v) in series.iter() {
        out.push_str(&format!("{m},{v}\n"));
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Final observation within the month.
    #[default]
    Last,
    Mean,
    /// End-of-month value, then interior monthly gaps filled linearly.
    LinearInterp,
}

/// Anything that can be brought to one value per month.
pub trait MonthlySource {
    fn series_name(&self) -> &str;
    fn monthly_buckets(&self) -> BTreeMap<Month, Vec<f64>>;
    fn template(&self) -> MacroSeries;
}

impl MonthlySource for MacroSeries {
    fn series_name(&self) -> &str {
        &self.name
    }

    fn monthly_buckets(&self) -> BTreeMap<Month, Vec<f64>> {
        self.iter().map(|(m, v)| (m, vec![v])).collect()
    }

    fn template(&self) -> MacroSeries {
        let mut t = self.clone();
        t.observations.clear();
        t
    }
}

impl MonthlySource for DatedSeries {
    fn series_name(&self) -> &str {
        &self.name
    }

    fn monthly_buckets(&self) -> BTreeMap<Month, Vec<f64>> {
        let mut b: BTreeMap<Month, Vec<f64>> = BTreeMap::new();
        for (d, v) in &self.observations {
            b.entry(d.month).or_default().push(*v);
        }
        b
    }

    fn template(&self) -> MacroSeries {
        MacroSeries::new(self.name.clone(), self.unit.clone(), self.source_kind)
    }
}

/// Converts to one value per covered month.
pub fn to_monthly<S: MonthlySource>(series: &S, method: Aggregation) -> Result<MacroSeries, DataError> {
    to_monthly_over(series, method, None)
}

/// Like [`to_monthly`], optionally against a required `(start, end)` span.
///
/// With [`Aggregation::LinearInterp`], months of the span lying before the
/// first or after the last observation are an error: there is no
/// extrapolation.
pub fn to_monthly_over<S: MonthlySource>(
    series: &S,
    method: Aggregation,
    span: Option<(Month, Month)>,
) -> Result<MacroSeries, DataError> {
    let buckets = series.monthly_buckets();
    if buckets.is_empty() {
        return Err(DataError::EmptySeries {
            series: series.series_name().to_string(),
        });
    }
    let mut out = series.template();
    for (m, vals) in &buckets {
        let v = match method {
            Aggregation::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
            Aggregation::Last | Aggregation::LinearInterp => *vals.last().expect("non-empty bucket"),
        };
        out.observations.insert(*m, v);
    }
    if method == Aggregation::LinearInterp {
        let first = out.first_month().expect("non-empty");
        let last = out.last_month().expect("non-empty");
        if let Some((start, end)) = span {
            if start < first {
                return Err(DataError::ExtrapolationRequired {
                    series: out.name.clone(),
                    edge: "leading",
                    month: start,
                });
            }
            if end > last {
                return Err(DataError::ExtrapolationRequired {
                    series: out.name.clone(),
                    edge: "trailing",
                    month: end,
                });
            }
        }
        let known: Vec<(Month, f64)> = out.iter().collect();
        for w in known.windows(2) {
            let (m0, v0) = w[0];
            let (m1, v1) = w[1];
            let gap = m0.months_until(m1);
            for k in 1..gap {
                let frac = k as f64 / gap as f64;
                out.observations.insert(m0.offset(k), v0 + frac * (v1 - v0));
            }
        }
    }
    if let Some((start, end)) = span {
        out = out.window(start, end);
    }
    Ok(out)
}

/// The three reliability components, each normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityInputs {
    pub timeliness: f64,
    pub revision_volatility: f64,
    pub crosscheck_error: f64,
}

/// `q = 0.4 T + 0.3 (1 - RV) + 0.3 (1 - CE)`.
pub fn reliability_score(inputs: &ReliabilityInputs) -> Result<f64, DataError> {
    for (component, value) in [
        ("timeliness", inputs.timeliness),
        ("revision_volatility", inputs.revision_volatility),
        ("crosscheck_error", inputs.crosscheck_error),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(DataError::ComponentOutOfRange { component, value });
        }
    }
    let q = 0.4 * inputs.timeliness + 0.3 * (1.0 - inputs.revision_volatility) + 0.3 * (1.0 - inputs.crosscheck_error);
    Ok(q.clamp(0.0, 1.0))
}

/// `Hybrid_t = q Actual_t + (1 - q) Proxy_t` where both exist; the sole
/// available source is passed through otherwise, with its origin recorded.
pub fn fuse_hybrid(actual: &MacroSeries, proxy: &MacroSeries, q: f64) -> Result<MacroSeries, DataError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DataError::WeightOutOfRange(q));
    }
    let name = format!("{}_hybrid", actual.name);
    let mut out = MacroSeries::new(name, actual.unit.clone(), SourceKind::Hybrid);
    out.reliability = Some(q);
    let months: std::collections::BTreeSet<Month> = actual.months().chain(proxy.months()).collect();
    for m in months {
        let (v, origin) = match (actual.get(m), proxy.get(m)) {
            (Some(a), Some(p)) => (q * a + (1.0 - q) * p, SourceKind::Hybrid),
            (Some(a), None) => (a, actual.source_kind),
            (None, Some(p)) => (p, proxy.source_kind),
            (None, None) => unreachable!(),
        };
        out.observations.insert(m, v);
        out.origins.insert(m, origin);
    }
    if out.is_empty() {
        return Err(DataError::EmptyFusion {
            actual: actual.name.clone(),
            proxy: proxy.name.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(s: &str) -> Month {
        s.parse().unwrap()
    }

    fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(&dir, "a.csv", "date,value\n2018-01,10.0\n2018-02,11.0\n");
        let s = load_series(&p, &ColumnSpec::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![(m("2018-01"), 10.0), (m("2018-02"), 11.0)]);
        assert_eq!(s.name, "a");
    }

    #[test]
    fn load_sorts_out_of_order_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(&dir, "a.csv", "date,value\n2018-03,1.0\n2018-01,2.0\n");
        let s = load_series(&p, &ColumnSpec::default()).unwrap();
        assert_eq!(s.months().collect::<Vec<_>>(), vec![m("2018-01"), m("2018-03")]);
    }

    #[test]
    fn load_rejects_duplicate_month() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(&dir, "a.csv", "date,value\n2018-01,1.0\n2018-01,2.0\n");
        let err = load_series(&p, &ColumnSpec::default()).unwrap_err();
        assert!(matches!(err, DataError::DuplicateMonth { month, .. } if month == m("2018-01")));
        assert!(err.to_string().contains("2018-01"));
    }

    #[test]
    fn load_reports_malformed_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(&dir, "a.csv", "date,value\n2018-01,1.0\n2018-02,abc\n");
        match load_series(&p, &ColumnSpec::default()).unwrap_err() {
            DataError::MalformedRow { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e}"),
        }
        let p = write_csv(&dir, "b.csv", "date,value\n18-01,1.0\n");
        assert!(matches!(
            load_series(&p, &ColumnSpec::default()),
            Err(DataError::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn load_missing_file_and_column() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_series(dir.path().join("nope.csv"), &ColumnSpec::default()),
            Err(DataError::FileNotFound { .. })
        ));
        let p = write_csv(&dir, "a.csv", "when,value\n2018-01,1\n");
        assert!(matches!(
            load_series(&p, &ColumnSpec::default()),
            Err(DataError::MissingColumn { .. })
        ));
        let spec = ColumnSpec {
            date: "when".into(),
            value: "value".into(),
        };
        assert_eq!(load_series(&p, &spec).unwrap().len(), 1);
    }

    #[test]
    fn empty_cells_are_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(&dir, "a.csv", "date,value\n2018-01,1\n2018-02,\n2018-03,3\n");
        let s = load_series(&p, &ColumnSpec::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(m("2018-02")), None);
    }

    fn daily(vals: &[(&str, f64)]) -> DatedSeries {
        DatedSeries {
            name: "d".into(),
            unit: String::new(),
            source_kind: SourceKind::Official,
            observations: vals.iter().map(|(d, v)| (d.parse().unwrap(), *v)).collect(),
        }
    }

    #[test]
    fn monthly_mean_and_last() {
        let d = daily(&[("2018-01-02", 1.0), ("2018-01-03", 2.0), ("2018-01-31", 3.0)]);
        let mean = to_monthly(&d, Aggregation::Mean).unwrap();
        assert_eq!(mean.values(), vec![2.0]);
        let last = to_monthly(&d, Aggregation::Last).unwrap();
        assert_eq!(last.values(), vec![3.0]);
    }

    #[test]
    fn monthly_linear_interp_fills_interior() {
        let s = MacroSeries::from_pairs("x", SourceKind::Official, [(m("2018-01"), 1.0), (m("2018-03"), 3.0)]).unwrap();
        let out = to_monthly(&s, Aggregation::LinearInterp).unwrap();
        assert_eq!(out.get(m("2018-02")), Some(2.0));
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn linear_interp_refuses_extrapolation() {
        let s = MacroSeries::from_pairs("x", SourceKind::Official, [(m("2018-02"), 1.0), (m("2018-03"), 3.0)]).unwrap();
        let err = to_monthly_over(&s, Aggregation::LinearInterp, Some((m("2018-01"), m("2018-03")))).unwrap_err();
        assert!(matches!(err, DataError::ExtrapolationRequired { edge: "leading", .. }));
        let err = to_monthly_over(&s, Aggregation::LinearInterp, Some((m("2018-02"), m("2018-05")))).unwrap_err();
        assert!(matches!(err, DataError::ExtrapolationRequired { edge: "trailing", .. }));
        // `last` just leaves the uncovered months absent
        let ok = to_monthly_over(&s, Aggregation::Last, Some((m("2018-01"), m("2018-05")))).unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn monthly_rejects_empty() {
        let s = MacroSeries::new("e", "", SourceKind::Official);
        assert!(matches!(to_monthly(&s, Aggregation::Mean), Err(DataError::EmptySeries { .. })));
    }

    #[test]
    fn reliability_examples() {
        let r = |t, rv, ce| {
            reliability_score(&ReliabilityInputs {
                timeliness: t,
                revision_volatility: rv,
                crosscheck_error: ce,
            })
        };
        assert_eq!(r(1.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(r(0.0, 1.0, 1.0).unwrap(), 0.0);
        let direct = 0.4 * 0.75 + 0.3 * 0.5 + 0.3 * 0.5;
        assert!((r(0.75, 0.5, 0.5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(r(0.75, 0.5, 0.5).unwrap(), direct);
        assert!(matches!(
            r(1.1, 0.0, 0.0),
            Err(DataError::ComponentOutOfRange { component: "timeliness", .. })
        ));
        assert!(r(0.5, -0.1, 0.0).is_err());
    }

    fn single(name: &str, kind: SourceKind, v: f64) -> MacroSeries {
        MacroSeries::from_pairs(name, kind, [(m("2018-01"), v)]).unwrap()
    }

    #[test]
    fn fusion_examples() {
        let a = single("cpi", SourceKind::Official, 10.0);
        let p = single("m2", SourceKind::Proxy, 20.0);
        assert_eq!(fuse_hybrid(&a, &p, 1.0).unwrap().values(), vec![10.0]);
        assert_eq!(fuse_hybrid(&a, &p, 0.0).unwrap().values(), vec![20.0]);
        let h = fuse_hybrid(&a, &p, 0.6).unwrap();
        assert!((h.values()[0] - 14.0).abs() < 1e-12);
        assert_eq!(h.source_kind, SourceKind::Hybrid);
        assert_eq!(h.reliability, Some(0.6));
        assert!(matches!(fuse_hybrid(&a, &p, 1.5), Err(DataError::WeightOutOfRange(_))));
    }

    #[test]
    fn fusion_passes_through_sole_source() {
        let a = MacroSeries::from_pairs("cpi", SourceKind::Official, [(m("2018-01"), 1.0), (m("2018-02"), 2.0)]).unwrap();
        let p = MacroSeries::from_pairs("m2", SourceKind::Proxy, [(m("2018-02"), 4.0), (m("2018-03"), 5.0)]).unwrap();
        let h = fuse_hybrid(&a, &p, 0.5).unwrap();
        assert_eq!(h.values(), vec![1.0, 3.0, 5.0]);
        assert_eq!(h.origin(m("2018-01")), Some(SourceKind::Official));
        assert_eq!(h.origin(m("2018-02")), Some(SourceKind::Hybrid));
        assert_eq!(h.origin(m("2018-03")), Some(SourceKind::Proxy));
        let e = MacroSeries::new("e", "", SourceKind::Official);
        assert!(matches!(fuse_hybrid(&e, &e, 0.5), Err(DataError::EmptyFusion { .. })));
    }

    proptest! {
        #[test]
        fn fusion_is_convex_and_monotone(a in -1e3f64..1e3, p in -1e3f64..1e3, q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
            let sa = single("a", SourceKind::Official, a);
            let sp = single("p", SourceKind::Proxy, p);
            let h1 = fuse_hybrid(&sa, &sp, q1).unwrap().values()[0];
            let h2 = fuse_hybrid(&sa, &sp, q2).unwrap().values()[0];
            let slack = 1e-12 * (a.abs() + p.abs() + 1.0);
            prop_assert!(h1 >= a.min(p) - slack && h1 <= a.max(p) + slack);
            if a > p && q1 <= q2 {
                prop_assert!(h1 <= h2 + slack);
            }
        }

        #[test]
        fn to_monthly_is_idempotent(vals in proptest::collection::vec((0u8..40, -1e6f64..1e6), 1..30), method in 0usize..3) {
            let method = [Aggregation::Last, Aggregation::Mean, Aggregation::LinearInterp][method];
            let start = m("2018-01");
            let mut s = MacroSeries::new("x", "", SourceKind::Official);
            for (off, v) in vals {
                let _ = s.insert(start.offset(off as i64), v);
            }
            let once = to_monthly(&s, method).unwrap();
            let twice = to_monthly(&once, method).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn save_then_load_round_trips(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 1..20)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.csv");
            let s = MacroSeries::from_values("x", SourceKind::Official, m("2019-06"), &vals);
            save_series(&s, &p).unwrap();
            let back = load_series(&p, &ColumnSpec::default()).unwrap();
            prop_assert_eq!(back.iter().map(|(m, v)| (m, v.to_bits())).collect::<Vec<_>>(),
                            s.iter().map(|(m, v)| (m, v.to_bits())).collect::<Vec<_>>());
        }
    }
}
