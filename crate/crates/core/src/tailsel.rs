//! Data-driven left-tail quantile selection.
//!
//! Each country's threshold is the smallest quantile whose empirical lower
//! tail holds at least `min_count` observations; the unified threshold is the
//! maximum across countries so that every country satisfies the cardinality
//! floor. The upper quantile mirrors it around the median.
//!
//! Quantiles use the type-1 inverse empirical CDF: `F^-1(tau)` is the
//! `ceil(tau * T)`-th order statistic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stats::{order_statistic_index, sample_variance, sorted};

/// Minimum number of observations in each country's lower tail.
pub const MIN_TAIL_COUNT: usize = 6;

/// Conditional-to-unconditional variance ratio required for a tail to count
/// as extreme.
pub const VARIANCE_RATIO_THRESHOLD: f64 = 2.0;

pub const TAU_MID: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TailError {
    #[error("{len} observations, need at least {min_count}")]
    TooFewObservations { len: usize, min_count: usize },
    #[error("no countries supplied")]
    Empty,
    #[error("tail at tau = {tau} holds {count} observation(s); variance needs at least 2")]
    TailTooSmall { tau: f64, count: usize },
    #[error("unconditional variance is zero; tail variance ratio undefined")]
    DegenerateVariance,
    #[error("country `{country}`: {source}")]
    Country {
        country: String,
        #[source]
        source: Box<TailError>,
    },
    #[error("tau = {tau} is not a lower-tail quantile in (0, 0.5)")]
    NotLowerTail { tau: f64 },
    #[error("country `{country}`: tail at tau = {tau} holds {count} observation(s), need {min_count}")]
    Infeasible {
        country: String,
        tau: f64,
        count: usize,
        min_count: usize,
    },
}

/// Number of observations at or below the type-1 empirical quantile.
pub fn tail_count(returns: &[f64], tau: f64) -> usize {
    tail_values(returns, tau).len()
}

/// Observations `R_t <= F^-1(tau)`, in original order.
pub fn tail_values(returns: &[f64], tau: f64) -> Vec<f64> {
    if returns.is_empty() {
        return Vec::new();
    }
    let s = sorted(returns);
    let cut = s[order_statistic_index(tau, s.len()) - 1];
    returns.iter().copied().filter(|&r| r <= cut).collect()
}

/// Smallest `tau = k / T` whose lower tail holds at least `min_count`
/// observations. Without ties this is exactly `min_count / T`; ties at the
/// cut can only make it smaller.
pub fn min_feasible_tail_quantile(returns: &[f64], min_count: usize) -> Result<f64, TailError> {
    let t = returns.len();
    if t < min_count || min_count == 0 {
        return Err(TailError::TooFewObservations { len: t, min_count });
    }
    let s = sorted(returns);
    // s[k-1] is the cut for tau = k/T; count of values <= cut
    for k in 1..=min_count {
        let cut = s[k - 1];
        let count = s.partition_point(|&x| x <= cut);
        if count >= min_count {
            return Ok(k as f64 / t as f64);
        }
    }
    unreachable!("k = min_count always satisfies the count")
}

/// `max_i tau_i`.
pub fn unify_tail_quantile(per_country: &BTreeMap<String, f64>) -> Result<f64, TailError> {
    per_country.values().copied().reduce(f64::max).ok_or(TailError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub passes: bool,
    pub ratio: f64,
}

/// `Var(R | R <= F^-1(tau)) / Var(R)`, both unbiased; passes at ratio >= 2.
pub fn tail_variance_check(returns: &[f64], tau: f64) -> Result<VarianceCheck, TailError> {
    let tail = tail_values(returns, tau);
    if tail.len() < 2 {
        return Err(TailError::TailTooSmall { tau, count: tail.len() });
    }
    let total = sample_variance(returns).expect("tail implies >= 2 observations");
    if total == 0.0 {
        return Err(TailError::DegenerateVariance);
    }
    let ratio = sample_variance(&tail).expect("len >= 2") / total;
    Ok(VarianceCheck {
        passes: ratio >= VARIANCE_RATIO_THRESHOLD,
        ratio,
    })
}

/// `(tau_low, 0.5, 1 - tau_low)` plus per-country diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailQuantileTriplet {
    pub tau_low: f64,
    pub tau_mid: f64,
    pub tau_high: f64,
    pub per_country_taus: BTreeMap<String, f64>,
    /// Missing when the ratio is undefined for a country; see `warnings`.
    pub variance_ratio: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    /// Set when `tau_low` came from an explicit override.
    pub overridden: bool,
}

impl TailQuantileTriplet {
    pub fn taus(&self) -> [f64; 3] {
        [self.tau_low, self.tau_mid, self.tau_high]
    }
}

pub fn build_triplet(per_country_returns: &BTreeMap<String, Vec<f64>>) -> Result<TailQuantileTriplet, TailError> {
    build_triplet_with_override(per_country_returns, None)
}

/// As [`build_triplet`], but `override_tau` (if given) replaces the selected
/// lower quantile. The override must be a lower-tail quantile that still
/// leaves every country with at least [`MIN_TAIL_COUNT`] tail observations.
pub fn build_triplet_with_override(
    per_country_returns: &BTreeMap<String, Vec<f64>>,
    override_tau: Option<f64>,
) -> Result<TailQuantileTriplet, TailError> {
    if per_country_returns.is_empty() {
        return Err(TailError::Empty);
    }
    let mut per_country_taus = BTreeMap::new();
    for (country, r) in per_country_returns {
        let tau = min_feasible_tail_quantile(r, MIN_TAIL_COUNT).map_err(|e| TailError::Country {
            country: country.clone(),
            source: Box::new(e),
        })?;
        per_country_taus.insert(country.clone(), tau);
    }
    let selected = unify_tail_quantile(&per_country_taus)?;
    let tau_low = match override_tau {
        Some(tau) => {
            check_feasible(per_country_returns, tau)?;
            tau
        }
        None => selected,
    };

    let mut variance_ratio = BTreeMap::new();
    let mut warnings = Vec::new();
    if tau_low >= TAU_MID {
        warnings.push(format!(
            "selected lower quantile {tau_low} is not below the median; samples are too short for a genuine tail"
        ));
    }
    for (country, r) in per_country_returns {
        match tail_variance_check(r, tau_low) {
            Ok(check) => {
                if !check.passes {
                    warnings.push(format!(
                        "{country}: tail variance ratio {:.3} below {VARIANCE_RATIO_THRESHOLD} at tau = {tau_low}",
                        check.ratio
                    ));
                }
                variance_ratio.insert(country.clone(), check.ratio);
            }
            Err(e) => warnings.push(format!("{country}: variance check undefined: {e}")),
        }
    }
    Ok(TailQuantileTriplet {
        tau_low,
        tau_mid: TAU_MID,
        tau_high: 1.0 - tau_low,
        per_country_taus,
        variance_ratio,
        warnings,
        overridden: override_tau.is_some(),
    })
}

/// Validates a candidate lower quantile against every country's sample.
pub fn check_feasible(per_country_returns: &BTreeMap<String, Vec<f64>>, tau: f64) -> Result<(), TailError> {
    if !(tau > 0.0 && tau < TAU_MID) {
        return Err(TailError::NotLowerTail { tau });
    }
    for (country, r) in per_country_returns {
        let count = tail_count(r, tau);
        if count < MIN_TAIL_COUNT {
            return Err(TailError::Infeasible {
                country: country.clone(),
                tau,
                count,
                min_count: MIN_TAIL_COUNT,
            });
        }
    }
    Ok(())
}
