//! Re-runs the tail-dependent stages at alternative lower-tail quantiles and
//! compares hedge effectiveness and tail dependence with the base run.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::output::write_atomic;
use super::{hedge_stage, prepare, select_triplet, EpisodeData, LoadedConfig, PipelineError, Provenance};
use crate::hedge::{fmt_fixed, HedgeReport, Residency};
use crate::tailsel::TailQuantileTriplet;

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub country: String,
    pub residency: Residency,
    pub hedge_effectiveness_pct: Option<f64>,
    pub tail_dependence: Option<f64>,
    pub empirical_tail_dependence: Option<f64>,
    pub he_delta: Option<f64>,
    pub tail_dependence_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SweepOutcome {
    Completed { rows: Vec<SweepRow> },
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub tau: f64,
    pub outcome: SweepOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub provenance: Provenance,
    pub base_tau: f64,
    pub base: Vec<SweepRow>,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    /// Largest absolute change of the fitted tail dependence over all
    /// completed quantiles and rows.
    pub fn max_tail_dependence_drift(&self) -> Option<f64> {
        self.completed_rows().filter_map(|r| r.tail_dependence_delta.map(f64::abs)).reduce(f64::max)
    }

    pub fn completed_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.entries.iter().flat_map(|e| match &e.outcome {
            SweepOutcome::Completed { rows } => rows.as_slice(),
            SweepOutcome::Infeasible { .. } => &[],
        })
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>, d: usize| x.map_or_else(|| "NA".to_string(), |v| fmt_fixed(v, d));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["tau", "status", "country", "residency", "hedge_eff_pct", "he_delta", "tail_dependence", "td_delta", "empirical_td", "reason"])
            .expect("in-memory write");
        let emit = |w: &mut csv::Writer<Vec<u8>>, tau: String, rows: &[SweepRow]| {
            for r in rows {
                w.write_record([
                    tau.clone(),
                    "ok".into(),
                    r.country.clone(),
                    r.residency.to_string(),
                    opt(r.hedge_effectiveness_pct, 4),
                    opt(r.he_delta, 4),
                    opt(r.tail_dependence, 4),
                    opt(r.tail_dependence_delta, 4),
                    opt(r.empirical_tail_dependence, 4),
                    String::new(),
                ])
                .expect("in-memory write");
            }
        };
        emit(&mut w, format!("{} (base)", self.base_tau), &self.base);
        for e in &self.entries {
            match &e.outcome {
                SweepOutcome::Completed { rows } => emit(&mut w, e.tau.to_string(), rows),
                SweepOutcome::Infeasible { reason } => {
                    let mut rec = vec![e.tau.to_string(), "infeasible".into()];
                    rec.extend(std::iter::repeat_n(String::new(), 7));
                    rec.push(reason.clone());
                    w.write_record(rec).expect("in-memory write");
                }
            }
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        format!("{}\n{body}", self.provenance.header_line())
    }
}

fn rows_for(data: &[EpisodeData], triplet: &TailQuantileTriplet, config: &super::RunConfig) -> Result<Vec<HedgeReport>, PipelineError> {
    let per: Vec<Vec<HedgeReport>> = data
        .par_iter()
        .map(|d| hedge_stage(d, triplet, config).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    let mut reports: Vec<HedgeReport> = per.into_iter().flatten().collect();
    reports.sort_by(|a, b| (a.country.as_str(), a.residency).cmp(&(b.country.as_str(), b.residency)));
    Ok(reports)
}

fn to_row(r: &HedgeReport, base: Option<&SweepRow>) -> SweepRow {
    let delta = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    SweepRow {
        country: r.country.clone(),
        residency: r.residency,
        hedge_effectiveness_pct: r.hedge_effectiveness_pct,
        tail_dependence: r.tail_dependence,
        empirical_tail_dependence: r.empirical_tail_dependence,
        he_delta: base.and_then(|b| delta(r.hedge_effectiveness_pct, b.hedge_effectiveness_pct)),
        tail_dependence_delta: base.and_then(|b| delta(r.tail_dependence, b.tail_dependence)),
    }
}

/// One summary per requested quantile. Quantiles that are not lower tails,
/// or leave a country with too few tail observations, are listed as
/// infeasible and the sweep continues.
pub fn sensitivity_sweep(loaded: &LoadedConfig, taus: &[f64], out_dir: Option<&Path>) -> Result<SweepReport, PipelineError> {
    let config = &loaded.config;
    let (data, provenance) = prepare(loaded)?;
    let base_triplet = select_triplet(&data, None).map_err(PipelineError::from_tail)?;
    let base: Vec<SweepRow> = rows_for(&data, &base_triplet, config)?.iter().map(|r| to_row(r, None)).collect();
    let mut entries = Vec::new();
    for &tau in taus {
        let outcome = match select_triplet(&data, Some(tau)) {
            Err(e) => SweepOutcome::Infeasible { reason: e.to_string() },
            Ok(triplet) => {
                let reports = rows_for(&data, &triplet, config)?;
                let rows = reports
                    .iter()
                    .map(|r| {
                        let b = base.iter().find(|b| b.country == r.country && b.residency == r.residency);
                        to_row(r, b)
                    })
                    .collect();
                SweepOutcome::Completed { rows }
            }
        };
        entries.push(SweepEntry { tau, outcome });
    }
    let report = SweepReport {
        provenance,
        base_tau: base_triplet.tau_low,
        base,
        entries,
    };
    if let Some(dir) = out_dir {
        write_atomic(&dir.join(SWEEP_CSV), &report.to_csv())?;
    }
    Ok(report)
}
