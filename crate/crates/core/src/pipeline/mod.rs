//! Config-driven orchestration: data loading, returns, tail quantiles,
//! quantile regressions, copulas, hedge reports and attribution, plus the
//! sensitivity sweep and synthetic fixtures.

pub mod config;
pub mod fixture;
pub mod manifest;
pub mod output;
pub mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::attribution::{attribute_window, bootstrap_stability, importance_summary, AttributionError, AttributionResult, ImportanceSummary, StabilityReport};
use crate::bootstrap::{default_block_length, derive_seed};
use crate::copula::{
    block_bootstrap_ci, empirical_tail_dependence, fit_all, fitted_lambda_statistic, select_family, BootstrapCi, BootstrapConfig,
    CopulaError, CopulaFit, Criterion, EmpiricalTail, PseudoSample,
};
use crate::dataio::{MacroSeries, SourceKind};
use crate::hedge::{build_hedge_report, loss_series, net_real_return, HedgeError, HedgeReport, ReportHeader, Residency};
use crate::month::Month;
use crate::qreg::{engineer_features, expanding_window_cv, fit_quantile, CvReport, DesignMatrix, QregError, QuantileModel};
use crate::returns::{build_return_series, PriceObservation, ReturnSeries, ReturnsError};
use crate::stats::sample_std;
use crate::tailsel::{build_triplet_with_override, TailError, TailQuantileTriplet};

pub use config::{CrisisEpisode, LoadedConfig, RunConfig};

/// Name of the regression target in the feature panel. The reserved prefix
/// keeps it out of every feature schema.
pub const TARGET_SERIES: &str = "equity_return";
/// Month-over-month exchange-rate change added to the feature panel.
pub const FX_CHANGE_SERIES: &str = "fx_change";
/// 0/1 pulse at the crisis month added to the feature panel.
pub const CRISIS_DUMMY: &str = "crisis_event";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in {stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: &'static str, message: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data (and output), 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data { .. } | PipelineError::Output { .. } => 3,
            PipelineError::Numerical { .. } => 4,
        }
    }

    fn data(stage: &'static str, country: &str, e: impl std::fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            message: format!("{country}: {e}"),
        }
    }

    fn numerical(stage: &'static str, country: &str, e: impl std::fmt::Display) -> Self {
        PipelineError::Numerical {
            stage,
            message: format!("{country}: {e}"),
        }
    }

    fn from_returns(country: &str, e: ReturnsError) -> Self {
        Self::data("returns", country, e)
    }

    fn from_tail(e: TailError) -> Self {
        match e {
            TailError::NotLowerTail { .. } => PipelineError::Config(format!("tailsel: {e}")),
            TailError::DegenerateVariance => PipelineError::Numerical {
                stage: "tailsel",
                message: e.to_string(),
            },
            _ => PipelineError::Data {
                stage: "tailsel",
                message: e.to_string(),
            },
        }
    }

    fn from_qreg(country: &str, e: QregError) -> Self {
        match e {
            QregError::InvalidTau(_) | QregError::EndogenousFeature(_) | QregError::InvalidSchema(_) | QregError::MissingSeries(_) => {
                PipelineError::Config(format!("{country}: qreg: {e}"))
            }
            QregError::NonConvergence { .. } => Self::numerical("qreg", country, e),
            _ => Self::data("qreg", country, e),
        }
    }

    fn from_hedge(country: &str, e: HedgeError) -> Self {
        Self::data("hedge", country, e)
    }
}

/// Everything needed to reproduce a run bit-identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    /// Over the manifests and data files, in canonical order.
    pub inputs_sha256: String,
    pub seed: u64,
    pub bootstrap_replications: usize,
    pub version: String,
}

impl Provenance {
    pub fn header_line(&self) -> String {
        format!(
            "# provenance: config_sha256={} inputs_sha256={} seed={} replications={} version={}",
            self.config_sha256, self.inputs_sha256, self.seed, self.bootstrap_replications, self.version
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidencyResult {
    pub residency: Residency,
    pub net_real_sd_pct: Option<f64>,
    /// Selected by AIC among the converged candidates.
    pub copula: Option<CopulaFit>,
    pub candidates: Vec<CopulaFit>,
    pub bootstrap: Option<BootstrapCi>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauAttribution {
    pub tau: f64,
    pub per_month: Vec<AttributionResult>,
    pub importance: Option<ImportanceSummary>,
    pub stability: Option<StabilityReport>,
    /// Largest `|phi0 + sum(phi) - prediction|` over the months.
    pub max_efficiency_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeResult {
    pub country: String,
    pub crisis_month: Month,
    pub returns: ReturnSeries,
    pub models: Vec<QuantileModel>,
    pub cv: Vec<CvReport>,
    pub residencies: Vec<ResidencyResult>,
    pub attributions: Vec<TauAttribution>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub provenance: Provenance,
    pub triplet: TailQuantileTriplet,
    pub reports: Vec<HedgeReport>,
    pub episodes: Vec<EpisodeResult>,
    pub diagnostics: Vec<String>,
}

/// Loaded and conditioned inputs of one episode.
#[derive(Debug, Clone)]
pub(crate) struct EpisodeData {
    pub episode: CrisisEpisode,
    pub crisis: Month,
    /// Full analysis window.
    pub returns: ReturnSeries,
    pub inflation: MacroSeries,
    pub fx: MacroSeries,
    pub panel: BTreeMap<String, MacroSeries>,
    pub inputs: Vec<(PathBuf, Vec<u8>)>,
}

impl EpisodeData {
    /// Returns from the crisis month to the end of the window.
    pub fn post(&self) -> ReturnSeries {
        self.returns.window(self.crisis, self.episode.window_end)
    }

    fn stream(&self) -> u64 {
        let h = Sha256::digest(self.episode.country.as_bytes());
        u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
    }
}

fn sha256_hex(chunks: impl IntoIterator<Item = impl AsRef<[u8]>>) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update(c.as_ref());
    }
    hex::encode(h.finalize())
}

pub(crate) fn prepare(loaded: &LoadedConfig) -> Result<(Vec<EpisodeData>, Provenance), PipelineError> {
    let data: Vec<EpisodeData> = loaded
        .config
        .episodes
        .par_iter()
        .map(|ep| prepare_episode(loaded, ep))
        .collect::<Result<_, _>>()?;
    let mut files: Vec<&(PathBuf, Vec<u8>)> = data.iter().flat_map(|d| &d.inputs).collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files.dedup_by(|a, b| a.0 == b.0);
    let inputs_sha256 = sha256_hex(files.iter().flat_map(|(p, b)| {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        [name.into_bytes(), b.clone()]
    }));
    let provenance = Provenance {
        config_sha256: sha256_hex([&loaded.raw]),
        inputs_sha256,
        seed: loaded.config.seed,
        bootstrap_replications: loaded.config.bootstrap.replications,
        version: format!("crisis-hedge/{}", env!("CARGO_PKG_VERSION")),
    };
    Ok((data, provenance))
}

fn prepare_episode(loaded: &LoadedConfig, ep: &CrisisEpisode) -> Result<EpisodeData, PipelineError> {
    let country = ep.country.as_str();
    let crisis = ep.crisis_month()?;
    let panel_in = manifest::Manifest::load(&loaded.resolve(&ep.series_manifest))?;
    let mut panel = panel_in.series;
    let role = |name: &str| {
        panel
            .get(name)
            .cloned()
            .ok_or_else(|| PipelineError::Config(format!("{country}: series `{name}` not in manifest")))
    };
    let index = role(&ep.series.index)?;
    let fx = role(&ep.series.fx)?;
    let inflation = role(&ep.series.inflation)?;
    let (ws, we) = (ep.window_start, ep.window_end);

    let prices = PriceObservation::join(&index.window(ws.prev(), we), &fx.window(ws.prev(), we));
    let returns = build_return_series(&prices, &inflation)
        .map_err(|e| PipelineError::from_returns(country, e))?
        .window(ws, we);
    if returns.is_empty() {
        return Err(PipelineError::data("returns", country, format!("no returns in window {ws}..{we}")));
    }
    if returns.months.binary_search(&crisis).is_err() {
        return Err(PipelineError::data("returns", country, format!("no return observed at crisis month {crisis}")));
    }

    let mut add = |name: &str, s: MacroSeries| {
        if panel.insert(name.to_string(), s).is_some() {
            Err(PipelineError::Config(format!("{country}: manifest series `{name}` collides with a derived series")))
        } else {
            Ok(())
        }
    };
    add(
        TARGET_SERIES,
        MacroSeries::from_pairs(TARGET_SERIES, SourceKind::Official, returns.months.iter().copied().zip(returns.nominal.iter().copied()))
            .map_err(|e| PipelineError::data("returns", country, e))?,
    )?;
    add(FX_CHANGE_SERIES, fx.pct_change(FX_CHANGE_SERIES))?;
    let pulse: Vec<f64> = ws.range_inclusive(we).map(|m| if m == crisis { 1.0 } else { 0.0 }).collect();
    add(CRISIS_DUMMY, MacroSeries::from_values(CRISIS_DUMMY, SourceKind::Official, ws, &pulse))?;

    Ok(EpisodeData {
        episode: ep.clone(),
        crisis,
        returns,
        inflation,
        fx,
        panel,
        inputs: panel_in.inputs,
    })
}

pub(crate) fn select_triplet(data: &[EpisodeData], override_tau: Option<f64>) -> Result<TailQuantileTriplet, TailError> {
    let per_country: BTreeMap<String, Vec<f64>> = data.iter().map(|d| (d.episode.country.clone(), d.post().nominal)).collect();
    build_triplet_with_override(&per_country, override_tau)
}

/// Copula fits and hedge reports of one episode over its post-crisis
/// window.
pub(crate) fn hedge_stage(
    d: &EpisodeData,
    triplet: &TailQuantileTriplet,
    config: &RunConfig,
) -> Result<(Vec<HedgeReport>, Vec<ResidencyResult>), PipelineError> {
    let country = d.episode.country.as_str();
    let post = d.post();
    let pi = MacroSeries::from_pairs(
        d.inflation.name.clone(),
        d.inflation.source_kind,
        post.months.iter().map(|&m| (m, d.inflation.get(m).expect("returns need inflation"))),
    )
    .map_err(|e| PipelineError::data("hedge", country, e))?;
    let header = |residency| ReportHeader {
        country: country.to_string(),
        residency,
        crisis_date: d.episode.crisis_date.clone(),
        crisis_month: d.crisis,
    };
    let results: Vec<(HedgeReport, ResidencyResult)> = d
        .episode
        .residencies()
        .into_par_iter()
        .map(|residency| {
            let loss = loss_series(&pi, &d.fx, residency).map_err(|e| PipelineError::from_hedge(country, e))?;
            let mut diags = Vec::new();
            let (copula, candidates, bootstrap) = copula_stage(d, residency, &post.nominal, &loss.loss, triplet, config, &mut diags);
            let mut report =
                build_hedge_report(&header(residency), &post, &loss, copula.as_ref(), triplet).map_err(|e| PipelineError::from_hedge(country, e))?;
            report.diagnostics.splice(0..0, diags);
            let net = net_real_return(&post.nominal, &loss).map_err(|e| PipelineError::from_hedge(country, e))?;
            Ok((
                report,
                ResidencyResult {
                    residency,
                    net_real_sd_pct: sample_std(&net).map(|s| 100.0 * s),
                    copula,
                    candidates,
                    bootstrap,
                },
            ))
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(results.into_iter().unzip())
}

/// Fits all families and bootstraps the selected one. Failures here are
/// recorded as diagnostics; the report then shows no tail dependence.
fn copula_stage(
    d: &EpisodeData,
    residency: Residency,
    returns: &[f64],
    erosion: &[f64],
    triplet: &TailQuantileTriplet,
    config: &RunConfig,
    diags: &mut Vec<String>,
) -> (Option<CopulaFit>, Vec<CopulaFit>, Option<BootstrapCi>) {
    let sample = match PseudoSample::from_raw(returns, erosion) {
        Ok(s) => s,
        Err(e) => {
            diags.push(format!("copula: {e}"));
            return (None, vec![], None);
        }
    };
    let (candidates, errors) = fit_all(&sample);
    for e in &errors {
        diags.push(format!("copula: {e}"));
    }
    let mut fit = match select_family(&candidates, Criterion::Aic) {
        Ok(f) => f,
        Err(e) => {
            if !matches!(errors.first(), Some(CopulaError::TooFewObservations { .. })) {
                diags.push(format!("copula: {e}"));
            }
            return (None, candidates, None);
        }
    };
    match empirical_tail_dependence(&sample, triplet.tau_low) {
        Ok(value) => {
            fit.empirical_lambda_at_tau = Some(EmpiricalTail {
                tau: triplet.tau_low,
                value,
            })
        }
        Err(e) => diags.push(format!("copula: empirical tail dependence: {e}")),
    }
    let b = &config.bootstrap;
    let boot_config = BootstrapConfig {
        replications: b.replications,
        level: b.level,
        block_length: b.block_length.map(|l| l.min(sample.n())),
        seed: derive_seed(derive_seed(config.seed, d.stream()), 1 + residency as u64),
    };
    let bootstrap = match block_bootstrap_ci(&sample, fitted_lambda_statistic(fit.family), &boot_config) {
        Ok(ci) => {
            fit.lambda_lower_ci = Some(ci.interval);
            if ci.failed > 0 {
                diags.push(format!("copula: {} of {} bootstrap refits failed", ci.failed, ci.replications));
            }
            Some(ci)
        }
        Err(e) => {
            diags.push(format!("copula: bootstrap: {e}"));
            None
        }
    };
    (Some(fit), candidates, bootstrap)
}

/// Regression quantiles of an episode: its override, else the triplet.
fn episode_taus(d: &EpisodeData, triplet: &TailQuantileTriplet) -> Vec<f64> {
    let mut taus = d.episode.quantile_override.clone().unwrap_or_else(|| triplet.taus().to_vec());
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

pub(crate) struct QregOutput {
    design: DesignMatrix,
    models: Vec<QuantileModel>,
    cv: Vec<CvReport>,
    diagnostics: Vec<String>,
}

fn qreg_stage(d: &EpisodeData, triplet: &TailQuantileTriplet, config: &RunConfig) -> Result<QregOutput, PipelineError> {
    let country = d.episode.country.as_str();
    let design = engineer_features(&d.panel, &d.episode.features, TARGET_SERIES)
        .map_err(|e| PipelineError::from_qreg(country, e))?
        .window(d.episode.window_start, d.episode.window_end);
    let mut diagnostics = Vec::new();
    if design.dropped_rows > 0 {
        diagnostics.push(format!("qreg: {} month(s) dropped for missing features or lags", design.dropped_rows));
    }
    let t = design.n_rows();
    let initial = config.cv.initial_window.unwrap_or(t / 2);
    let step = config.cv.step.unwrap_or((t / 10).max(1));
    let crisis = config.cv.crisis_aware.then_some(d.crisis);
    let fitted: Vec<(QuantileModel, Option<CvReport>, Vec<String>)> = episode_taus(d, triplet)
        .into_par_iter()
        .map(|tau| {
            let model = fit_quantile(&design, tau).map_err(|e| PipelineError::from_qreg(country, e))?;
            let mut notes: Vec<String> = model.warnings.iter().map(|w| format!("qreg tau={tau}: {w}")).collect();
            let cv = match expanding_window_cv(&design, tau, initial, step, crisis) {
                Ok(cv) => {
                    notes.extend(cv.notes.iter().map(|n| format!("cv tau={tau}: {n}")));
                    Some(cv)
                }
                Err(e @ QregError::NonConvergence { .. }) => return Err(PipelineError::from_qreg(country, e)),
                Err(e) => {
                    notes.push(format!("cv tau={tau}: skipped: {e}"));
                    None
                }
            };
            Ok((model, cv, notes))
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut models = Vec::new();
    let mut cv = Vec::new();
    for (m, c, notes) in fitted {
        models.push(m);
        cv.extend(c);
        diagnostics.extend(notes);
    }
    Ok(QregOutput {
        design,
        models,
        cv,
        diagnostics,
    })
}

fn attribution_stage(d: &EpisodeData, q: &QregOutput, config: &RunConfig) -> Result<(Vec<TauAttribution>, Vec<String>), PipelineError> {
    let country = d.episode.country.as_str();
    let mut diagnostics = Vec::new();
    let mut out = Vec::new();
    for (i, model) in q.models.iter().enumerate() {
        let per_month = attribute_window(model, &q.design).map_err(|e| PipelineError::numerical("attribution", country, e))?;
        let max_efficiency_error = per_month
            .iter()
            .map(|r| (r.phi0 + r.phi.iter().sum::<f64>() - r.prediction).abs())
            .fold(0.0, f64::max);
        let importance = match importance_summary(&per_month) {
            Ok(s) => Some(s),
            Err(e) => {
                diagnostics.push(format!("attribution tau={}: {e}", model.tau));
                None
            }
        };
        let mut stability = None;
        // ranking stability for the lower-tail model only
        if i == 0 && importance.is_some() {
            let reps = config.bootstrap.stability_replications.unwrap_or(config.bootstrap.replications);
            let n = q.design.n_rows();
            let block = config.bootstrap.block_length.unwrap_or_else(|| default_block_length(n)).min(n);
            let seed = derive_seed(derive_seed(config.seed, d.stream()), 100);
            match bootstrap_stability(&q.design, model.tau, reps, block, seed) {
                Ok(s) => stability = Some(s),
                Err(e @ (AttributionError::TooFewRankings(_) | AttributionError::Qreg(_))) => {
                    diagnostics.push(format!("attribution tau={}: stability: {e}", model.tau))
                }
                Err(e) => return Err(PipelineError::numerical("attribution", country, e)),
            }
        }
        let importance = importance.map(|mut s| {
            s.stability_kendall_tau = stability.as_ref().map(|r| r.kendall_tau);
            s
        });
        out.push(TauAttribution {
            tau: model.tau,
            per_month,
            importance,
            stability,
            max_efficiency_error,
        });
    }
    Ok((out, diagnostics))
}

/// Runs every stage and, with `out_dir`, writes each stage's files as soon
/// as the stage completes.
pub fn run_pipeline(loaded: &LoadedConfig, out_dir: Option<&Path>) -> Result<RunResult, PipelineError> {
    let config = &loaded.config;
    let (data, provenance) = prepare(loaded)?;
    let triplet = select_triplet(&data, None).map_err(PipelineError::from_tail)?;
    let mut diagnostics: Vec<String> = triplet.warnings.iter().map(|w| format!("tailsel: {w}")).collect();

    let qreg: Vec<QregOutput> = data.par_iter().map(|d| qreg_stage(d, &triplet, config)).collect::<Result<_, _>>()?;
    if let Some(dir) = out_dir {
        output::write_coefficients(dir, &provenance, &data, &qreg)?;
    }

    let hedged: Vec<(Vec<HedgeReport>, Vec<ResidencyResult>)> =
        data.par_iter().map(|d| hedge_stage(d, &triplet, config)).collect::<Result<_, _>>()?;

    let mut reports = Vec::new();
    let mut episodes = Vec::new();
    for ((d, q), (r, residencies)) in data.iter().zip(qreg).zip(hedged) {
        reports.extend(r);
        episodes.push((
            q,
            EpisodeResult {
                country: d.episode.country.clone(),
                crisis_month: d.crisis,
                returns: d.returns.clone(),
                models: vec![],
                cv: vec![],
                residencies,
                attributions: vec![],
                diagnostics: vec![],
            },
        ));
    }
    reports.sort_by(|a, b| (a.country.as_str(), a.residency).cmp(&(b.country.as_str(), b.residency)));
    for r in &reports {
        diagnostics.extend(r.diagnostics.iter().map(|m| format!("{} {}: {m}", r.country, r.residency)));
    }
    let mut result = RunResult {
        provenance,
        triplet,
        reports,
        episodes: vec![],
        diagnostics,
    };
    for (q, e) in &mut episodes {
        e.models = q.models.clone();
        e.cv = std::mem::take(&mut q.cv);
        e.diagnostics = std::mem::take(&mut q.diagnostics);
    }
    result.episodes = episodes.iter().map(|(_, e)| e.clone()).collect();
    if let Some(dir) = out_dir {
        output::write_reports(dir, &result)?;
    }

    let attributed: Vec<(Vec<TauAttribution>, Vec<String>)> = data
        .par_iter()
        .zip(&episodes)
        .map(|(d, (q, _))| attribution_stage(d, q, config))
        .collect::<Result<_, _>>()?;
    for (e, (attr, diags)) in result.episodes.iter_mut().zip(attributed) {
        e.attributions = attr;
        e.diagnostics.extend(diags);
    }
    for e in &mut result.episodes {
        result.diagnostics.extend(e.diagnostics.iter().map(|m| format!("{}: {m}", e.country)));
    }
    result.episodes.sort_by(|a, b| a.country.cmp(&b.country));
    if let Some(dir) = out_dir {
        output::write_attribution(dir, &result)?;
        output::write_full(dir, &result)?;
    }
    Ok(result)
}

/// Loads the config and manifests and checks the schema against the data,
/// without fitting anything.
pub fn validate(loaded: &LoadedConfig) -> Result<Vec<String>, PipelineError> {
    let (data, _) = prepare(loaded)?;
    let mut notes = Vec::new();
    for d in &data {
        let design = engineer_features(&d.panel, &d.episode.features, TARGET_SERIES).map_err(|e| PipelineError::from_qreg(&d.episode.country, e))?;
        notes.push(format!(
            "{}: {} returns ({} post-crisis), {} regression rows x {} columns",
            d.episode.country,
            d.returns.len(),
            d.post().len(),
            design.window(d.episode.window_start, d.episode.window_end).n_rows(),
            design.columns.len()
        ));
    }
    let triplet = select_triplet(&data, None).map_err(PipelineError::from_tail)?;
    notes.push(format!("tail quantiles ({}, {}, {})", triplet.tau_low, triplet.tau_mid, triplet.tau_high));
    notes.extend(triplet.warnings.iter().map(|w| format!("tailsel: {w}")));
    Ok(notes)
}
