//! Nominal and real equity returns for domestic and foreign investors.
//!
//! Real returns use exact multiplicative deflation,
//! `(1 + r) / (1 + pi) - 1`, never the additive approximation `r - pi`.
//! The foreign-investor return additionally converts through the exchange
//! rate quoted in local currency per USD, so a rising rate (depreciation)
//! lowers the USD-denominated return.
//!
//! All rates are fractions; inflation is month-over-month.

use serde::{Deserialize, Serialize};

use crate::dataio::MacroSeries;
use crate::month::Month;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReturnsError {
    #[error("price level must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("exchange rate must be positive, got {0}")]
    NonPositiveFx(f64),
    #[error("inflation rate must exceed -1, got {0}")]
    InflationBelowMinusOne(f64),
    #[error("nominal return must exceed -1, got {0}")]
    NominalBelowMinusOne(f64),
    #[error("need at least 2 overlapping months of prices and inflation, found {0}")]
    InsufficientOverlap(usize),
}

/// One month of index level and exchange rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceObservation {
    pub month: Month,
    /// Index level in local currency.
    pub index_level: f64,
    /// Local currency units per USD.
    pub fx_rate: f64,
}

impl PriceObservation {
    /// Joins index and FX series on common months.
    pub fn join(index: &MacroSeries, fx: &MacroSeries) -> Vec<PriceObservation> {
        index
            .iter()
            .filter_map(|(month, index_level)| {
                fx.get(month).map(|fx_rate| PriceObservation {
                    month,
                    index_level,
                    fx_rate,
                })
            })
            .collect()
    }
}

/// Returns starting at the second month of the price series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub months: Vec<Month>,
    pub nominal: Vec<f64>,
    pub real_domestic: Vec<f64>,
    pub real_foreign: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    /// Restriction to `start..=end`.
    pub fn window(&self, start: Month, end: Month) -> Self {
        let mut out = ReturnSeries::default();
        for (i, &m) in self.months.iter().enumerate() {
            if m >= start && m <= end {
                out.months.push(m);
                out.nominal.push(self.nominal[i]);
                out.real_domestic.push(self.real_domestic[i]);
                out.real_foreign.push(self.real_foreign[i]);
            }
        }
        out
    }

    pub fn nominal_series(&self) -> MacroSeries {
        let mut s = MacroSeries::new("nominal_return", "fraction", crate::dataio::SourceKind::Official);
        for (m, v) in self.months.iter().zip(&self.nominal) {
            s.insert(*m, *v).expect("months are unique");
        }
        s
    }
}

pub fn nominal_return(p_t: f64, p_prev: f64) -> Result<f64, ReturnsError> {
    for p in [p_t, p_prev] {
        if !(p > 0.0) {
            return Err(ReturnsError::NonPositivePrice(p));
        }
    }
    Ok(p_t / p_prev - 1.0)
}

pub fn real_return_domestic(r_nom: f64, pi: f64) -> Result<f64, ReturnsError> {
    if !(r_nom > -1.0) {
        return Err(ReturnsError::NominalBelowMinusOne(r_nom));
    }
    if !(pi > -1.0) {
        return Err(ReturnsError::InflationBelowMinusOne(pi));
    }
    Ok((1.0 + r_nom) / (1.0 + pi) - 1.0)
}

pub fn real_return_foreign(r_nom: f64, e_prev: f64, e_t: f64, pi: f64) -> Result<f64, ReturnsError> {
    for e in [e_prev, e_t] {
        if !(e > 0.0) {
            return Err(ReturnsError::NonPositiveFx(e));
        }
    }
    if e_prev == e_t {
        // identical to the domestic path, bit for bit
        return real_return_domestic(r_nom, pi);
    }
    if !(r_nom > -1.0) {
        return Err(ReturnsError::NominalBelowMinusOne(r_nom));
    }
    if !(pi > -1.0) {
        return Err(ReturnsError::InflationBelowMinusOne(pi));
    }
    Ok((1.0 + r_nom) * (e_prev / e_t) / (1.0 + pi) - 1.0)
}

/// Applies the three return transformations month by month.
///
/// A month contributes only when the previous calendar month's prices and
/// the current month's inflation are available; other months are dropped
/// with a warning, never imputed.
pub fn build_return_series(prices: &[PriceObservation], inflation: &MacroSeries) -> Result<ReturnSeries, ReturnsError> {
    let mut sorted = prices.to_vec();
    sorted.sort_by_key(|p| p.month);
    let mut out = ReturnSeries::default();
    let mut dropped = Vec::new();
    for w in sorted.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        if prev.month != cur.month.prev() {
            dropped.push(cur.month);
            continue;
        }
        let Some(pi) = inflation.get(cur.month) else {
            dropped.push(cur.month);
            continue;
        };
        let r = nominal_return(cur.index_level, prev.index_level)?;
        out.months.push(cur.month);
        out.nominal.push(r);
        out.real_domestic.push(real_return_domestic(r, pi)?);
        out.real_foreign.push(real_return_foreign(r, prev.fx_rate, cur.fx_rate, pi)?);
    }
    if !dropped.is_empty() {
        log::warn!(
            "returns: dropped {} month(s) lacking a prior price or inflation: {}",
            dropped.len(),
            dropped.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
        );
    }
    // two aligned price months yield one return
    if out.is_empty() {
        return Err(ReturnsError::InsufficientOverlap(sorted.len().min(inflation.len())));
    }
    Ok(out)
}
