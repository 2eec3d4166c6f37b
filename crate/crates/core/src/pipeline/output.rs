//! Output files. Every file starts with the provenance record and is
//! written to a temporary name, then renamed into place.

use std::path::Path;

use super::{EpisodeData, PipelineError, Provenance, QregOutput, RunResult};
use crate::hedge::{fmt_fixed, table_csv};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_FULL: &str = "report.full";
pub const COEFFICIENTS_CSV: &str = "coefficients.csv";
pub const ATTRIBUTION_CSV: &str = "attribution.csv";
pub const IMPORTANCE_JSON: &str = "importance.json";
pub const FIGURES_DIR: &str = "figures";

pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<(), PipelineError> {
    let err = |source| PipelineError::Output {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, contents).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        err(e)
    })
}

fn csv_body<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn with_provenance(p: &Provenance, body: &str) -> String {
    format!("{}\n{body}", p.header_line())
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn write_coefficients(dir: &Path, p: &Provenance, data: &[EpisodeData], qreg: &[QregOutput]) -> Result<(), PipelineError> {
    let mut rows = Vec::new();
    for (d, q) in data.iter().zip(qreg) {
        for m in &q.models {
            let mut push = |term: String, value: f64| rows.push(vec![d.episode.country.clone(), num(m.tau), term, num(value)]);
            push("(intercept)".into(), m.intercept);
            for b in &m.betas {
                push(b.term.clone(), b.value);
            }
            for g in &m.gammas {
                push(format!("{}:{}", g.left, g.right), g.value);
            }
        }
    }
    rows.sort_by(|a, b| a[0].cmp(&b[0]));
    write_atomic(&dir.join(COEFFICIENTS_CSV), &with_provenance(p, &csv_body(&["country", "tau", "term", "value"], rows)))
}

/// Table-shaped report, the full structured record so far, and the
/// return/risk figure data.
pub(crate) fn write_reports(dir: &Path, r: &RunResult) -> Result<(), PipelineError> {
    write_atomic(&dir.join(REPORT_CSV), &with_provenance(&r.provenance, &table_csv(&r.reports)))?;
    write_full(dir, r)?;

    let mut rows = Vec::new();
    for e in &r.episodes {
        let s = &e.returns;
        for (i, m) in s.months.iter().enumerate() {
            let offset = e.crisis_month.months_until(*m).to_string();
            for (series, v) in [("nominal", s.nominal[i]), ("real_domestic", s.real_domestic[i]), ("real_foreign", s.real_foreign[i])] {
                rows.push(vec![e.country.clone(), m.to_string(), offset.clone(), series.to_string(), num(v)]);
            }
        }
    }
    let body = csv_body(&["country", "month", "months_from_crisis", "series", "value"], rows);
    write_atomic(&dir.join(FIGURES_DIR).join("real_returns_around_crisis.csv"), &with_provenance(&r.provenance, &body))?;

    let rows = r.reports.iter().map(|rep| {
        let sd = r
            .episodes
            .iter()
            .find(|e| e.country == rep.country)
            .and_then(|e| e.residencies.iter().find(|x| x.residency == rep.residency))
            .and_then(|x| x.net_real_sd_pct);
        vec![
            rep.country.clone(),
            rep.residency.to_string(),
            num(rep.mean_net_real_pct),
            sd.map_or_else(|| "NA".into(), num),
            num(rep.mean_erosion_pct),
            rep.hedge_effectiveness_pct.map_or_else(|| "NA".into(), num),
        ]
    });
    let body = csv_body(
        &["country", "residency", "mean_net_real_pct", "sd_net_real_pct", "mean_erosion_pct", "hedge_effectiveness_pct"],
        rows,
    );
    write_atomic(&dir.join(FIGURES_DIR).join("risk_return_scatter.csv"), &with_provenance(&r.provenance, &body))
}

/// Per-month attribution table, importance summaries and bar data.
pub(crate) fn write_attribution(dir: &Path, r: &RunResult) -> Result<(), PipelineError> {
    let mut rows = Vec::new();
    let mut bars = Vec::new();
    let mut summaries = Vec::new();
    for e in &r.episodes {
        for a in &e.attributions {
            for res in &a.per_month {
                let month = res.instance_month.map(|m| m.to_string()).unwrap_or_default();
                let mut push = |term: String, kind: &str, value: f64| {
                    rows.push(vec![e.country.clone(), num(a.tau), month.clone(), term, kind.to_string(), num(value)])
                };
                push("(baseline)".into(), "baseline", res.phi0);
                for (f, v) in res.features.iter().zip(&res.phi) {
                    push(f.clone(), "main", *v);
                }
                for p in &res.phi_interactions {
                    push(format!("{}:{}", p.left, p.right), "interaction", p.value);
                }
                push("(prediction)".into(), "prediction", res.prediction);
            }
            if let Some(s) = &a.importance {
                for (rank, (f, share)) in s.shares.iter().enumerate() {
                    bars.push(vec![e.country.clone(), num(a.tau), (rank + 1).to_string(), f.clone(), fmt_fixed(*share, 4)]);
                }
            }
            summaries.push(serde_json::json!({
                "country": e.country,
                "tau": a.tau,
                "importance": a.importance,
                "stability": a.stability,
                "max_efficiency_error": a.max_efficiency_error,
            }));
        }
    }
    let body = csv_body(&["country", "tau", "month", "term", "kind", "value"], rows);
    write_atomic(&dir.join(ATTRIBUTION_CSV), &with_provenance(&r.provenance, &body))?;
    let body = csv_body(&["country", "tau", "rank", "feature", "share_pct"], bars);
    write_atomic(&dir.join(FIGURES_DIR).join("importance_bars.csv"), &with_provenance(&r.provenance, &body))?;
    let json = serde_json::json!({ "provenance": r.provenance, "summaries": summaries });
    write_atomic(&dir.join(IMPORTANCE_JSON), &pretty(&json))
}

pub(crate) fn write_full(dir: &Path, r: &RunResult) -> Result<(), PipelineError> {
    let json = serde_json::json!({ "schema_version": 1, "run": r });
    write_atomic(&dir.join(REPORT_FULL), &pretty(&json))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
