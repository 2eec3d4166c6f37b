//! Copula-based lower-tail dependence between equity returns and purchasing
//! power erosion.
//!
//! Paired series are mapped to pseudo-observations (`rank / (n + 1)`), each
//! Archimedean family is fitted by one-dimensional maximum likelihood, and the
//! winning family is chosen by AIC or BIC. The analytic lower-tail coefficient
//! of the fitted family is complemented by the empirical conditional frequency
//! `P(V <= tau | U <= tau)` at the selected tail quantile, and by a
//! moving-block bootstrap interval that re-ranks each replicate.

mod family;

pub use family::{debye1, CopulaFamily};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{default_block_length, moving_block_indices, replicate_rng};
use crate::stats::{kendall_tau, percentile_sorted, total_cmp};

/// Smallest sample accepted by [`fit_copula`].
pub const MIN_FIT_SIZE: usize = 20;
/// Golden-section termination width on theta.
pub const THETA_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CopulaError {
    #[error("need at least {min} observations, got {n}")]
    TooFewObservations { n: usize, min: usize },
    #[error("paired samples differ in length ({u} vs {v})")]
    LengthMismatch { u: usize, v: usize },
    #[error("pseudo-observations must lie strictly inside (0, 1)")]
    OutsideUnitInterval,
    #[error("{family}: optimizer did not converge after {iterations} iterations")]
    NonConvergence { family: CopulaFamily, iterations: usize },
    #[error("{family}: likelihood maximized at parameter bound theta = {theta} (degenerate dependence)")]
    AtBoundary {
        family: CopulaFamily,
        theta: f64,
        log_likelihood: f64,
    },
    #[error("{family}: theta = {theta} outside the family's parameter space")]
    ThetaOutOfRange { family: CopulaFamily, theta: f64 },
    #[error("no converged copula fit to select from")]
    NoConvergedFit,
    #[error("no observations with u <= {tau}")]
    EmptyConditioningSet { tau: f64 },
    #[error("block length {block_length} invalid for sample of size {n}")]
    InvalidBlockLength { block_length: usize, n: usize },
    #[error("need at least 100 bootstrap replications, got {0}")]
    TooFewReplications(usize),
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("statistic undefined on every bootstrap replicate")]
    AllReplicatesFailed,
}

/// Average ranks scaled by `1 / (n + 1)`.
pub fn pseudo_observations(x: &[f64]) -> Result<Vec<f64>, CopulaError> {
    let n = x.len();
    if n < 2 {
        return Err(CopulaError::TooFewObservations { n, min: 2 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_cmp(&x[a], &x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j share the average of ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let denom = (n + 1) as f64;
    Ok(ranks.into_iter().map(|r| r / denom).collect())
}

/// Paired pseudo-observations: `u` from equity returns, `v` from erosion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSample {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl PseudoSample {
    /// Rank-transforms raw paired data.
    pub fn from_raw(returns: &[f64], erosion: &[f64]) -> Result<Self, CopulaError> {
        if returns.len() != erosion.len() {
            return Err(CopulaError::LengthMismatch {
                u: returns.len(),
                v: erosion.len(),
            });
        }
        Ok(Self {
            u: pseudo_observations(returns)?,
            v: pseudo_observations(erosion)?,
        })
    }

    /// Wraps values that are already uniform on (0, 1).
    pub fn from_uniform(u: Vec<f64>, v: Vec<f64>) -> Result<Self, CopulaError> {
        if u.len() != v.len() {
            return Err(CopulaError::LengthMismatch { u: u.len(), v: v.len() });
        }
        if u.iter().chain(&v).any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(CopulaError::OutsideUnitInterval);
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Rows `idx` re-ranked into fresh pseudo-observations.
    fn resample(&self, idx: &[usize]) -> Self {
        let u: Vec<f64> = idx.iter().map(|&i| self.u[i]).collect();
        let v: Vec<f64> = idx.iter().map(|&i| self.v[i]).collect();
        Self {
            u: pseudo_observations(&u).expect("n >= 2"),
            v: pseudo_observations(&v).expect("n >= 2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTail {
    pub tau: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    pub family: CopulaFamily,
    pub theta: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    /// Analytic lower-tail coefficient of the fitted family.
    pub lambda_lower: f64,
    pub lambda_lower_ci: Option<ConfidenceInterval>,
    pub empirical_lambda_at_tau: Option<EmpiricalTail>,
}

pub fn log_likelihood(sample: &PseudoSample, family: CopulaFamily, theta: f64) -> f64 {
    let ll: f64 = sample.u.iter().zip(&sample.v).map(|(&u, &v)| family.log_density(u, v, theta)).sum();
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Maximizes the family's log-likelihood over its bounded parameter interval.
///
/// The search starts from the Kendall's-tau inversion, expands a bracket
/// uphill, then narrows it by golden-section search until its width is below
/// [`THETA_TOLERANCE`]. A maximizer within `1e-6` of an interval end is
/// reported as [`CopulaError::AtBoundary`].
pub fn fit_copula(sample: &PseudoSample, family: CopulaFamily) -> Result<CopulaFit, CopulaError> {
    let n = sample.n();
    if n < MIN_FIT_SIZE {
        return Err(CopulaError::TooFewObservations { n, min: MIN_FIT_SIZE });
    }
    let tau = kendall_tau(&sample.u, &sample.v);
    let start = family.theta_from_tau(tau);
    let f = |theta: f64| log_likelihood(sample, family, theta);
    let (theta, ll) = maximize_bounded(f, family.bounds(), start).ok_or(CopulaError::NonConvergence {
        family,
        iterations: MAX_ITERATIONS,
    })?;
    if !ll.is_finite() {
        return Err(CopulaError::NonConvergence {
            family,
            iterations: MAX_ITERATIONS,
        });
    }
    let (lo, hi) = family.bounds();
    if theta - lo < 1e-6 || hi - theta < 1e-6 {
        return Err(CopulaError::AtBoundary {
            family,
            theta,
            log_likelihood: ll,
        });
    }
    if !family.is_valid(theta) {
        return Err(CopulaError::ThetaOutOfRange { family, theta });
    }
    Ok(CopulaFit {
        family,
        theta,
        log_likelihood: ll,
        aic: 2.0 - 2.0 * ll,
        bic: (n as f64).ln() - 2.0 * ll,
        n,
        lambda_lower: family.lower_tail_dependence(theta),
        lambda_lower_ci: None,
        empirical_lambda_at_tau: None,
    })
}

/// Returns `None` when the iteration budget is exhausted.
fn maximize_bounded(f: impl Fn(f64) -> f64, (lo, hi): (f64, f64), start: f64) -> Option<(f64, f64)> {
    let mut iterations = 0usize;
    let x0 = start.clamp(lo, hi);
    let f0 = f(x0);
    let mut h = 0.05 * x0.abs().max(1.0);

    // Find a < b < c with f(b) >= f(a), f(c), or hit a bound.
    let (mut a, mut c);
    let right = (x0 + h).min(hi);
    let left = (x0 - h).max(lo);
    let (fr, fl) = (f(right), f(left));
    if fr > f0 && fr >= fl {
        let (mut b, mut fb) = (right, fr);
        a = x0;
        loop {
            iterations += 1;
            h *= 2.0;
            let next = (b + h).min(hi);
            let fnext = f(next);
            if fnext <= fb || next >= hi {
                c = next;
                if fnext > fb {
                    a = b;
                }
                break;
            }
            a = b;
            b = next;
            fb = fnext;
            if iterations > MAX_ITERATIONS {
                return None;
            }
        }
    } else if fl > f0 {
        let (mut b, mut fb) = (left, fl);
        c = x0;
        loop {
            iterations += 1;
            h *= 2.0;
            let next = (b - h).max(lo);
            let fnext = f(next);
            if fnext <= fb || next <= lo {
                a = next;
                if fnext > fb {
                    c = b;
                }
                break;
            }
            c = b;
            b = next;
            fb = fnext;
            if iterations > MAX_ITERATIONS {
                return None;
            }
        }
    } else {
        a = left;
        c = right;
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = c - INV_PHI * (c - a);
    let mut x2 = a + INV_PHI * (c - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while c - a > THETA_TOLERANCE {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return None;
        }
        if f1 >= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - INV_PHI * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (c - a);
            f2 = f(x2);
        }
    }
    // the bracket ends themselves are candidates when the optimum sits on a bound
    let candidates = [(x1, f1), (x2, f2), (a, f(a)), (c, f(c))];
    candidates.into_iter().filter(|(_, fx)| !fx.is_nan()).max_by(|p, q| p.1.total_cmp(&q.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

/// Minimum-criterion fit; exact ties resolve clayton < gumbel < frank.
pub fn select_family(fits: &[CopulaFit], criterion: Criterion) -> Result<CopulaFit, CopulaError> {
    let score = |f: &CopulaFit| match criterion {
        Criterion::Aic => f.aic,
        Criterion::Bic => f.bic,
    };
    fits.iter()
        .filter(|f| score(f).is_finite())
        .min_by(|a, b| score(a).total_cmp(&score(b)).then(a.family.cmp(&b.family)))
        .cloned()
        .ok_or(CopulaError::NoConvergedFit)
}

/// Fits every family and keeps the converged ones, alongside the failures.
pub fn fit_all(sample: &PseudoSample) -> (Vec<CopulaFit>, Vec<CopulaError>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for fam in CopulaFamily::ALL {
        match fit_copula(sample, fam) {
            Ok(fit) => ok.push(fit),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}

pub fn lower_tail_dependence(family: CopulaFamily, theta: f64) -> Result<f64, CopulaError> {
    if !family.is_valid(theta) {
        return Err(CopulaError::ThetaOutOfRange { family, theta });
    }
    Ok(family.lower_tail_dependence(theta))
}

/// `#{u <= tau and v <= tau} / #{u <= tau}`.
pub fn empirical_tail_dependence(sample: &PseudoSample, tau: f64) -> Result<f64, CopulaError> {
    let mut cond = 0usize;
    let mut joint = 0usize;
    for (&u, &v) in sample.u.iter().zip(&sample.v) {
        if u <= tau {
            cond += 1;
            if v <= tau {
                joint += 1;
            }
        }
    }
    if cond == 0 {
        return Err(CopulaError::EmptyConditioningSet { tau });
    }
    Ok(joint as f64 / cond as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub level: f64,
    /// `None` selects `ceil(n^(1/3))`.
    pub block_length: Option<usize>,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 1000,
            level: 0.95,
            block_length: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub interval: ConfidenceInterval,
    pub median: f64,
    pub block_length: usize,
    pub replications: usize,
    /// Replicates on which the statistic was undefined.
    pub failed: usize,
}

/// Percentile interval of `statistic` over moving-block resamples of the
/// paired sample. Each replicate re-ranks its rows and uses its own derived
/// seed, so the result is identical regardless of thread scheduling.
pub fn block_bootstrap_ci<S>(sample: &PseudoSample, statistic: S, config: &BootstrapConfig) -> Result<BootstrapCi, CopulaError>
where
    S: Fn(&PseudoSample) -> Option<f64> + Sync,
{
    let n = sample.n();
    let block_length = config.block_length.unwrap_or_else(|| default_block_length(n));
    if block_length == 0 || block_length > n {
        return Err(CopulaError::InvalidBlockLength { block_length, n });
    }
    if config.replications < 100 {
        return Err(CopulaError::TooFewReplications(config.replications));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(CopulaError::InvalidLevel(config.level));
    }
    let stats: Vec<Option<f64>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r as u64);
            let idx = moving_block_indices(n, block_length, &mut rng);
            statistic(&sample.resample(&idx))
        })
        .collect();
    let mut values: Vec<f64> = stats.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if values.is_empty() {
        return Err(CopulaError::AllReplicatesFailed);
    }
    values.sort_by(total_cmp);
    let alpha = 1.0 - config.level;
    Ok(BootstrapCi {
        interval: ConfidenceInterval {
            lo: percentile_sorted(&values, alpha / 2.0),
            hi: percentile_sorted(&values, 1.0 - alpha / 2.0),
            level: config.level,
        },
        median: percentile_sorted(&values, 0.5),
        block_length,
        replications: config.replications,
        failed: config.replications - values.len(),
    })
}

/// Statistic: analytic lambda of a refitted `family`. A fit pinned at a
/// parameter bound contributes the bound's lambda (0 for Clayton at its lower
/// end, the comonotone limit at its upper end).
pub fn fitted_lambda_statistic(family: CopulaFamily) -> impl Fn(&PseudoSample) -> Option<f64> + Sync {
    move |s| match fit_copula(s, family) {
        Ok(fit) => Some(fit.lambda_lower),
        Err(CopulaError::AtBoundary { theta, .. }) => Some(family.lower_tail_dependence(theta)),
        Err(_) => None,
    }
}

pub fn empirical_lambda_statistic(tau: f64) -> impl Fn(&PseudoSample) -> Option<f64> + Sync {
    move |s| empirical_tail_dependence(s, tau).ok()
}
