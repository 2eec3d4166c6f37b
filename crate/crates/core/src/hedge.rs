//! Purchasing-power loss, net real returns, variance-reduction hedge
//! effectiveness, and report rows.
//!
//! Foreign residents lose `pi_t + R^FX_t` per month, with
//! `R^FX_t = e_t / e_{t-1} - 1` on a local-per-USD rate so depreciation is a
//! positive loss. Local residents lose `pi_t` only. The net return is the
//! additive `nominal - loss`, and effectiveness is
//! `max(0, 1 - Var(net) / Var(loss))` with unbiased variances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::copula::{CopulaFamily, CopulaFit};
use crate::dataio::MacroSeries;
use crate::month::Month;
use crate::returns::ReturnSeries;
use crate::stats::{mean, sample_variance};
use crate::tailsel::TailQuantileTriplet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HedgeError {
    #[error("{month}: exchange rate missing for the month or the month before")]
    MisalignedMonths { month: Month },
    #[error("{month}: exchange rate must be positive, got {value}")]
    NonPositiveFx { month: Month, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("loss variance is zero; hedge effectiveness undefined")]
    ZeroLossVariance,
    #[error("returns and loss cover different months (first mismatch at position {position})")]
    WindowMismatch { position: usize },
    #[error("no loss observations")]
    EmptyLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residency {
    Local,
    Foreign,
}

impl fmt::Display for Residency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Residency::Local => "Local",
            Residency::Foreign => "Foreign",
        })
    }
}

impl FromStr for Residency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "local" => Ok(Residency::Local),
            "foreign" => Ok(Residency::Foreign),
            other => Err(format!("unknown residency `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub pi: f64,
    pub fx_ret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub months: Vec<Month>,
    pub loss: Vec<f64>,
    pub residency: Residency,
    pub components: Vec<LossComponents>,
}

impl LossSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }
}

/// `e_t / e_{t-1} - 1`.
pub fn fx_return(fx: &MacroSeries, month: Month) -> Result<f64, HedgeError> {
    let (Some(e_t), Some(e_prev)) = (fx.get(month), fx.get(month.prev())) else {
        return Err(HedgeError::MisalignedMonths { month });
    };
    for (m, e) in [(month, e_t), (month.prev(), e_prev)] {
        if !(e > 0.0) {
            return Err(HedgeError::NonPositiveFx { month: m, value: e });
        }
    }
    Ok(e_t / e_prev - 1.0)
}

/// One loss value per month of `pi`. Foreign residency needs the exchange
/// rate at every such month and the month before it.
pub fn loss_series(pi: &MacroSeries, fx: &MacroSeries, residency: Residency) -> Result<LossSeries, HedgeError> {
    let mut out = LossSeries {
        months: Vec::with_capacity(pi.len()),
        loss: Vec::with_capacity(pi.len()),
        residency,
        components: Vec::with_capacity(pi.len()),
    };
    for (month, p) in pi.iter() {
        let fx_ret = match residency {
            Residency::Local => 0.0,
            Residency::Foreign => fx_return(fx, month)?,
        };
        out.months.push(month);
        out.loss.push(p + fx_ret);
        out.components.push(LossComponents { pi: p, fx_ret });
    }
    if out.is_empty() {
        return Err(HedgeError::EmptyLoss);
    }
    Ok(out)
}

/// `nominal_t - loss_t`.
pub fn net_real_return(nominal: &[f64], loss: &LossSeries) -> Result<Vec<f64>, HedgeError> {
    if nominal.len() != loss.len() {
        return Err(HedgeError::LengthMismatch {
            left: nominal.len(),
            right: loss.len(),
        });
    }
    Ok(nominal.iter().zip(&loss.loss).map(|(r, l)| r - l).collect())
}

/// `max(0, 1 - Var(net) / Var(loss))`.
pub fn hedge_effectiveness(net: &[f64], loss: &[f64]) -> Result<f64, HedgeError> {
    if net.len() != loss.len() {
        return Err(HedgeError::LengthMismatch {
            left: net.len(),
            right: loss.len(),
        });
    }
    let (Some(var_net), Some(var_loss)) = (sample_variance(net), sample_variance(loss)) else {
        return Err(HedgeError::TooFewObservations(net.len()));
    };
    if var_loss == 0.0 {
        return Err(HedgeError::ZeroLossVariance);
    }
    Ok((1.0 - var_net / var_loss).max(0.0))
}

/// Identifies the report row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub country: String,
    pub residency: Residency,
    /// Crisis date as written in the configuration (may carry a day).
    pub crisis_date: String,
    pub crisis_month: Month,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeReport {
    pub country: String,
    pub residency: Residency,
    pub crisis_date: String,
    pub crisis_month: Month,
    pub window_start: Month,
    pub window_end: Month,
    pub n_months: usize,
    /// `None` when undefined (zero loss variance); see `diagnostics`.
    pub hedge_effectiveness_pct: Option<f64>,
    pub mean_erosion_pct: f64,
    pub mean_nominal_pct: f64,
    pub mean_net_real_pct: f64,
    /// Analytic lower-tail dependence of the selected copula.
    pub tail_dependence: Option<f64>,
    pub tail_dependence_ci: Option<(f64, f64)>,
    pub empirical_tail_dependence: Option<f64>,
    pub copula_family: Option<CopulaFamily>,
    pub copula_theta: Option<f64>,
    pub tau_low: f64,
    pub tau_mid: f64,
    pub tau_high: f64,
    pub diagnostics: Vec<String>,
}

/// Assembles one report row from inputs over the same window.
///
/// An undefined hedge effectiveness does not fail the row: it is recorded as
/// `None` with a diagnostic so that degenerate episodes still appear.
pub fn build_hedge_report(
    header: &ReportHeader,
    returns: &ReturnSeries,
    loss: &LossSeries,
    taildep: Option<&CopulaFit>,
    triplet: &TailQuantileTriplet,
) -> Result<HedgeReport, HedgeError> {
    if returns.months.len() != loss.months.len() {
        return Err(HedgeError::WindowMismatch {
            position: returns.months.len().min(loss.months.len()),
        });
    }
    if let Some(position) = returns.months.iter().zip(&loss.months).position(|(a, b)| a != b) {
        return Err(HedgeError::WindowMismatch { position });
    }
    if loss.is_empty() {
        return Err(HedgeError::EmptyLoss);
    }
    let net = net_real_return(&returns.nominal, loss)?;
    let mut diagnostics = Vec::new();
    let he = match hedge_effectiveness(&net, &loss.loss) {
        Ok(he) => Some(100.0 * he),
        Err(e) => {
            diagnostics.push(format!("hedge effectiveness: {e}"));
            None
        }
    };
    let (tail_dependence, tail_dependence_ci, empirical, family, theta) = match taildep {
        Some(fit) => {
            let ci = fit.lambda_lower_ci.map(|c| (c.lo, c.hi));
            if let Some((lo, hi)) = ci {
                if !(lo <= fit.lambda_lower && fit.lambda_lower <= hi) {
                    diagnostics.push(format!(
                        "tail dependence {:.4} lies outside its bootstrap interval ({lo:.4}, {hi:.4})",
                        fit.lambda_lower
                    ));
                }
            }
            (
                Some(fit.lambda_lower),
                ci,
                fit.empirical_lambda_at_tau.map(|e| e.value),
                Some(fit.family),
                Some(fit.theta),
            )
        }
        None => {
            diagnostics.push("tail dependence unavailable: no copula fit".to_string());
            (None, None, None, None, None)
        }
    };
    Ok(HedgeReport {
        country: header.country.clone(),
        residency: header.residency,
        crisis_date: header.crisis_date.clone(),
        crisis_month: header.crisis_month,
        window_start: loss.months[0],
        window_end: *loss.months.last().expect("non-empty"),
        n_months: loss.len(),
        hedge_effectiveness_pct: he,
        mean_erosion_pct: 100.0 * mean(&loss.loss),
        mean_nominal_pct: 100.0 * mean(&returns.nominal),
        mean_net_real_pct: 100.0 * mean(&net),
        tail_dependence,
        tail_dependence_ci,
        empirical_tail_dependence: empirical,
        copula_family: family,
        copula_theta: theta,
        tau_low: triplet.tau_low,
        tau_mid: triplet.tau_mid,
        tau_high: triplet.tau_high,
        diagnostics,
    })
}

pub const TABLE_COLUMNS: [&str; 7] = [
    "Country",
    "Residents",
    "Crisis Date",
    "Hedge Eff. (%)",
    "Erosion (%)",
    "Net Real (%)",
    "Tail Dependence",
];

/// Fixed-decimal rendering that never prints a negative zero.
pub fn fmt_fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>, decimals: usize) -> String {
    x.map_or_else(|| "NA".to_string(), |v| fmt_fixed(v, decimals))
}

impl HedgeReport {
    pub fn table_row(&self) -> [String; 7] {
        [
            self.country.clone(),
            self.residency.to_string(),
            self.crisis_date.clone(),
            fmt_opt(self.hedge_effectiveness_pct, 1),
            fmt_fixed(self.mean_erosion_pct, 2),
            fmt_fixed(self.mean_net_real_pct, 2),
            fmt_opt(self.tail_dependence, 2),
        ]
    }
}

/// Table-shaped CSV body (header plus one line per report).
pub fn table_csv(reports: &[HedgeReport]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(TABLE_COLUMNS).expect("in-memory write");
    for r in reports {
        w.write_record(r.table_row()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
