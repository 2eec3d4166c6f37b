//! Exact Shapley attribution for linear-plus-pairwise quantile models.
//!
//! The value of a coalition `S` is the model evaluated with instance values
//! on `S` and background means elsewhere, with interaction columns taking
//! the product of the per-feature choices. For
//! `f(x) = b0 + sum b_j x_j + sum g_jk x_j x_k` this gives
//!
//! ```text
//! phi_j  = b_j (x_j - mu_j) + sum_k g_jk (x_j - mu_j)(x_k + mu_k) / 2
//! phi_jk = g_jk (x_j - mu_j)(x_k - mu_k)
//! ```
//!
//! Subset enumeration of the same game is provided as an oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{moving_block_indices, replicate_rng};
use crate::month::Month;
use crate::qreg::{fit_quantile, DesignMatrix, QregError, QuantileModel};
use crate::stats::kendall_tau;

pub const MAX_BRUTE_FORCE_FEATURES: usize = 12;
pub const MAX_INTERACTION_ENUMERATION: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttributionError {
    #[error("instance has {got} features, model expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("background means have {got} entries, model expects {expected}")]
    MissingBackground { expected: usize, got: usize },
    #[error("subset enumeration limited to {max} features, got {m}")]
    TooManyFeatures { m: usize, max: usize },
    #[error("no attributions to summarize")]
    EmptyInput,
    #[error("all attributions are zero; importance shares undefined")]
    DegenerateImportance,
    #[error("need at least 2 rankings, got {0}")]
    TooFewRankings(usize),
    #[error("rankings cover different column sets")]
    MismatchedRankings,
    #[error(transparent)]
    Qreg(#[from] QregError),
}

/// `f(x) = intercept + sum beta_j x_j + sum gamma * x_j * x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseModel {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl PairwiseModel {
    pub fn from_quantile(model: &QuantileModel) -> Self {
        Self {
            intercept: model.intercept,
            beta: model.betas.iter().map(|b| b.value).collect(),
            pairs: model
                .interaction_index
                .iter()
                .zip(&model.gammas)
                .map(|(&(j, k), g)| (j, k, g.value))
                .collect(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut f = self.intercept;
        for (b, v) in self.beta.iter().zip(x) {
            f += b * v;
        }
        for &(j, k, g) in &self.pairs {
            f += g * x[j] * x[k];
        }
        f
    }

    /// Coalition value: instance values on `mask`, means elsewhere.
    fn coalition_value(&self, mask: u32, x: &[f64], mu: &[f64]) -> f64 {
        let z: Vec<f64> = (0..x.len()).map(|j| if mask & (1 << j) != 0 { x[j] } else { mu[j] }).collect();
        self.eval(&z)
    }

    fn check(&self, x: &[f64], mu: &[f64]) -> Result<(), AttributionError> {
        let m = self.n_features();
        if x.len() != m {
            return Err(AttributionError::SchemaMismatch { expected: m, got: x.len() });
        }
        if mu.len() != m {
            return Err(AttributionError::MissingBackground { expected: m, got: mu.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub left: String,
    pub right: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub features: Vec<String>,
    pub phi: Vec<f64>,
    pub phi0: f64,
    /// Declared pairs only; every other pair has zero interaction.
    pub phi_interactions: Vec<PairValue>,
    pub instance_month: Option<Month>,
    pub prediction: f64,
}

impl AttributionResult {
    /// `phi_ij`, symmetric in its arguments.
    pub fn interaction(&self, a: &str, b: &str) -> f64 {
        self.phi_interactions
            .iter()
            .filter(|p| (p.left == a && p.right == b) || (p.left == b && p.right == a))
            .map(|p| p.value)
            .sum()
    }
}

/// Closed-form Shapley values.
pub fn shapley_closed_form(model: &PairwiseModel, mu: &[f64], x: &[f64]) -> Result<(Vec<f64>, f64), AttributionError> {
    model.check(x, mu)?;
    let mut phi: Vec<f64> = (0..x.len()).map(|j| model.beta[j] * (x[j] - mu[j])).collect();
    for &(j, k, g) in &model.pairs {
        phi[j] += g * (x[j] - mu[j]) * (x[k] + mu[k]) / 2.0;
        phi[k] += g * (x[k] - mu[k]) * (x[j] + mu[j]) / 2.0;
    }
    Ok((phi, model.eval(mu)))
}

/// Shapley values by enumerating all `2^M` coalitions.
pub fn shapley_enumerated(model: &PairwiseModel, mu: &[f64], x: &[f64]) -> Result<(Vec<f64>, f64), AttributionError> {
    model.check(x, mu)?;
    let m = x.len();
    if m > MAX_BRUTE_FORCE_FEATURES {
        return Err(AttributionError::TooManyFeatures {
            m,
            max: MAX_BRUTE_FORCE_FEATURES,
        });
    }
    let values: Vec<f64> = (0..1u32 << m).map(|s| model.coalition_value(s, x, mu)).collect();
    let fact: Vec<f64> = factorials(m);
    let mut phi = vec![0.0; m];
    for (j, pj) in phi.iter_mut().enumerate() {
        let bit = 1u32 << j;
        for s in 0..1u32 << m {
            if s & bit != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            let w = fact[k] * fact[m - k - 1] / fact[m];
            *pj += w * (values[(s | bit) as usize] - values[s as usize]);
        }
    }
    Ok((phi, values[0]))
}

/// Closed-form Shapley interaction index for every declared pair.
pub fn interaction_closed_form(model: &PairwiseModel, mu: &[f64], x: &[f64]) -> Result<Vec<(usize, usize, f64)>, AttributionError> {
    model.check(x, mu)?;
    Ok(model
        .pairs
        .iter()
        .map(|&(j, k, g)| (j, k, g * (x[j] - mu[j]) * (x[k] - mu[k])))
        .collect())
}

/// Shapley interaction index of `(i, j)` by coalition enumeration.
pub fn interaction_enumerated(model: &PairwiseModel, mu: &[f64], x: &[f64], i: usize, j: usize) -> Result<f64, AttributionError> {
    model.check(x, mu)?;
    let m = x.len();
    if m > MAX_INTERACTION_ENUMERATION {
        return Err(AttributionError::TooManyFeatures {
            m,
            max: MAX_INTERACTION_ENUMERATION,
        });
    }
    let fact = factorials(m);
    let (bi, bj) = (1u32 << i, 1u32 << j);
    let mut total = 0.0;
    for s in 0..1u32 << m {
        if s & (bi | bj) != 0 {
            continue;
        }
        let k = s.count_ones() as usize;
        let w = fact[k] * fact[m - k - 2] / fact[m - 1];
        let v = |mask: u32| model.coalition_value(mask, x, mu);
        total += w * (v(s | bi | bj) - v(s | bi) - v(s | bj) + v(s));
    }
    Ok(total)
}

fn factorials(m: usize) -> Vec<f64> {
    let mut f = vec![1.0; m + 1];
    for k in 1..=m {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Mean standardized value of each base column over `x` (the training
/// window of `model`).
pub fn background_means(model: &QuantileModel, x: &DesignMatrix) -> Vec<f64> {
    let p = model.n_features();
    let mut mu = vec![0.0; p];
    for row in &x.values {
        for (m, z) in mu.iter_mut().zip(model.standardizer.apply(row)) {
            *m += z;
        }
    }
    let n = x.n_rows().max(1) as f64;
    mu.iter_mut().for_each(|m| *m /= n);
    mu
}

/// Shapley and interaction values for one standardized instance.
pub fn shapley_values(model: &QuantileModel, mu: &[f64], z: &[f64], month: Option<Month>) -> Result<AttributionResult, AttributionError> {
    let pm = PairwiseModel::from_quantile(model);
    let (phi, phi0) = shapley_closed_form(&pm, mu, z)?;
    let names: Vec<String> = model.betas.iter().map(|b| b.term.clone()).collect();
    let phi_interactions = interaction_closed_form(&pm, mu, z)?
        .into_iter()
        .map(|(j, k, v)| PairValue {
            left: names[j].clone(),
            right: names[k].clone(),
            value: v,
        })
        .collect();
    Ok(AttributionResult {
        features: names,
        phi,
        phi0,
        phi_interactions,
        instance_month: month,
        prediction: pm.eval(z),
    })
}

/// Per-month attributions over every row of `x`, against means of `x`.
pub fn attribute_window(model: &QuantileModel, x: &DesignMatrix) -> Result<Vec<AttributionResult>, AttributionError> {
    let mu = background_means(model, x);
    x.values
        .iter()
        .zip(&x.months)
        .map(|(row, m)| shapley_values(model, &mu, &model.standardizer.apply(row), Some(*m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    /// Columns by decreasing mean |phi|, ties broken by name.
    pub ranking: Vec<String>,
    /// Percentage of total mean |phi|, in `ranking` order.
    pub shares: Vec<(String, f64)>,
    pub mean_abs_phi: Vec<(String, f64)>,
    pub stability_kendall_tau: Option<f64>,
}

pub fn importance_summary(results: &[AttributionResult]) -> Result<ImportanceSummary, AttributionError> {
    let first = results.first().ok_or(AttributionError::EmptyInput)?;
    let m = first.features.len();
    let mut mean_abs = vec![0.0; m];
    for r in results {
        if r.features != first.features {
            return Err(AttributionError::SchemaMismatch {
                expected: m,
                got: r.features.len(),
            });
        }
        for (acc, p) in mean_abs.iter_mut().zip(&r.phi) {
            *acc += p.abs();
        }
    }
    mean_abs.iter_mut().for_each(|v| *v /= results.len() as f64);
    let total: f64 = mean_abs.iter().sum();
    if !(total > 0.0) {
        return Err(AttributionError::DegenerateImportance);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then_with(|| first.features[a].cmp(&first.features[b])));
    Ok(ImportanceSummary {
        ranking: order.iter().map(|&j| first.features[j].clone()).collect(),
        shares: order.iter().map(|&j| (first.features[j].clone(), 100.0 * mean_abs[j] / total)).collect(),
        mean_abs_phi: order.iter().map(|&j| (first.features[j].clone(), mean_abs[j])).collect(),
        stability_kendall_tau: None,
    })
}

/// Mean pairwise Kendall correlation between rankings of the same columns.
pub fn stability_kendall(rankings: &[Vec<String>]) -> Result<f64, AttributionError> {
    if rankings.len() < 2 {
        return Err(AttributionError::TooFewRankings(rankings.len()));
    }
    let mut reference = rankings[0].clone();
    reference.sort();
    let positions: Vec<Vec<f64>> = rankings
        .iter()
        .map(|r| {
            let mut sorted = r.clone();
            sorted.sort();
            if sorted != reference {
                return Err(AttributionError::MismatchedRankings);
            }
            Ok(reference
                .iter()
                .map(|name| r.iter().position(|c| c == name).expect("same set") as f64)
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..positions.len() {
        for b in a + 1..positions.len() {
            sum += kendall_tau(&positions[a], &positions[b]);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kendall_tau: f64,
    pub replications: usize,
    pub failed: usize,
    pub block_length: usize,
}

/// Refits the model on moving-block resamples of `x` and measures how
/// stable the importance ranking is. Replicates whose refit or importance
/// is undefined are skipped and counted.
pub fn bootstrap_stability(
    x: &DesignMatrix,
    tau: f64,
    replications: usize,
    block_length: usize,
    seed: u64,
) -> Result<StabilityReport, AttributionError> {
    let n = x.n_rows();
    let rankings: Vec<Option<Vec<String>>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let idx = moving_block_indices(n, block_length, &mut rng);
            let sample = x.select(&idx);
            let model = fit_quantile(&sample, tau).ok()?;
            let attr = attribute_window(&model, &sample).ok()?;
            importance_summary(&attr).ok().map(|s| s.ranking)
        })
        .collect();
    let ok: Vec<Vec<String>> = rankings.iter().flatten().cloned().collect();
    let kendall_tau = stability_kendall(&ok)?;
    Ok(StabilityReport {
        kendall_tau,
        replications,
        failed: replications - ok.len(),
        block_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, m: usize, n_pairs: usize) -> PairwiseModel {
        let mut pairs = Vec::new();
        while pairs.len() < n_pairs {
            let j = rng.random_range(0..m);
            let k = rng.random_range(0..m);
            if j != k && !pairs.iter().any(|&(a, b, _)| (a, b) == (j, k) || (a, b) == (k, j)) {
                pairs.push((j, k, rng.random::<f64>() * 4.0 - 2.0));
            }
        }
        PairwiseModel {
            intercept: rng.random::<f64>(),
            beta: (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
            pairs,
        }
    }

    fn draws(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
    }

    #[test]
    fn worked_examples() {
        let lin = PairwiseModel {
            intercept: 0.0,
            beta: vec![2.0],
            pairs: vec![],
        };
        assert_eq!(shapley_closed_form(&lin, &[1.0], &[3.0]).unwrap().0, vec![4.0]);

        let prod = PairwiseModel {
            intercept: 0.0,
            beta: vec![0.0, 0.0],
            pairs: vec![(0, 1, 1.0)],
        };
        let (phi, phi0) = shapley_closed_form(&prod, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(phi, vec![0.5, 0.5]);
        assert_eq!(phi0 + phi.iter().sum::<f64>(), 1.0);
        assert_eq!(shapley_enumerated(&prod, &[0.0, 0.0], &[1.0, 1.0]).unwrap().0, vec![0.5, 0.5]);
        assert_eq!(interaction_enumerated(&prod, &[0.0, 0.0], &[1.0, 1.0], 0, 1).unwrap(), 1.0);
        assert_eq!(interaction_closed_form(&prod, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![(0, 1, 1.0)]);
    }

    #[test]
    fn baseline_instance_has_null_attribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 6, 4);
        let mu = draws(&mut rng, 6);
        let (phi, phi0) = shapley_closed_form(&model, &mu, &mu).unwrap();
        assert!(phi.iter().all(|&p| p == 0.0));
        assert_eq!(phi0, model.eval(&mu));
        assert!(interaction_closed_form(&model, &mu, &mu).unwrap().iter().all(|p| p.2 == 0.0));
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let model = random_model(&mut rng, 8, 5);
            let mu = draws(&mut rng, 8);
            let x = draws(&mut rng, 8);
            let (a, a0) = shapley_closed_form(&model, &mu, &x).unwrap();
            let (b, b0) = shapley_enumerated(&model, &mu, &x).unwrap();
            assert_eq!(a0, b0);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-10);
            }
            assert!((a0 + a.iter().sum::<f64>() - model.eval(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn interactions_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let model = random_model(&mut rng, 6, 4);
            let mu = draws(&mut rng, 6);
            let x = draws(&mut rng, 6);
            let closed = interaction_closed_form(&model, &mu, &x).unwrap();
            for i in 0..6 {
                for j in i + 1..6 {
                    let want = closed
                        .iter()
                        .filter(|p| (p.0, p.1) == (i, j) || (p.0, p.1) == (j, i))
                        .map(|p| p.2)
                        .sum::<f64>();
                    let got = interaction_enumerated(&model, &mu, &x, i, j).unwrap();
                    assert!((want - got).abs() < 1e-10, "({i},{j}) {want} vs {got}");
                    assert!((got - interaction_enumerated(&model, &mu, &x, j, i).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn enumeration_edge_cases() {
        let empty = PairwiseModel {
            intercept: 3.0,
            beta: vec![],
            pairs: vec![],
        };
        assert_eq!(shapley_enumerated(&empty, &[], &[]).unwrap(), (vec![], 3.0));
        let single = PairwiseModel {
            intercept: 1.0,
            beta: vec![-1.5],
            pairs: vec![],
        };
        let (phi, _) = shapley_enumerated(&single, &[0.2], &[1.0]).unwrap();
        assert!((phi[0] - (single.eval(&[1.0]) - single.eval(&[0.2]))).abs() < 1e-15);
        let big = PairwiseModel {
            intercept: 0.0,
            beta: vec![0.0; 13],
            pairs: vec![],
        };
        assert!(matches!(shapley_enumerated(&big, &[0.0; 13], &[0.0; 13]), Err(AttributionError::TooManyFeatures { .. })));
        assert!(matches!(shapley_closed_form(&single, &[0.0], &[1.0, 2.0]), Err(AttributionError::SchemaMismatch { .. })));
        assert!(matches!(shapley_closed_form(&single, &[], &[1.0]), Err(AttributionError::MissingBackground { .. })));
    }

    fn result(features: &[&str], phi: &[f64]) -> AttributionResult {
        AttributionResult {
            features: features.iter().map(|s| s.to_string()).collect(),
            phi: phi.to_vec(),
            phi0: 0.0,
            phi_interactions: vec![],
            instance_month: None,
            prediction: phi.iter().sum(),
        }
    }

    #[test]
    fn importance_examples() {
        let s = importance_summary(&[result(&["a"], &[0.3])]).unwrap();
        assert_eq!(s.shares, vec![("a".to_string(), 100.0)]);
        let s = importance_summary(&[result(&["a", "b"], &[1.0, -3.0]), result(&["a", "b"], &[-1.0, 3.0])]).unwrap();
        assert_eq!(s.ranking, vec!["b", "a"]);
        assert_eq!(s.shares, vec![("b".to_string(), 75.0), ("a".to_string(), 25.0)]);
        assert_eq!(importance_summary(&[result(&["a", "b"], &[0.0, 0.0])]), Err(AttributionError::DegenerateImportance));
        assert_eq!(importance_summary(&[]), Err(AttributionError::EmptyInput));
        let tie = importance_summary(&[result(&["z", "a"], &[1.0, 1.0])]).unwrap();
        assert_eq!(tie.ranking, vec!["a", "z"]);
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stability_examples() {
        let r = names(&["a", "b", "c", "d"]);
        assert_eq!(stability_kendall(&[r.clone(), r.clone(), r.clone()]).unwrap(), 1.0);
        let rev: Vec<String> = r.iter().rev().cloned().collect();
        assert_eq!(stability_kendall(&[r.clone(), rev]).unwrap(), -1.0);
        let swap = names(&["b", "a", "c", "d"]);
        assert!((stability_kendall(&[r.clone(), swap]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(stability_kendall(&[r.clone(), names(&["a", "b", "c", "e"])]), Err(AttributionError::MismatchedRankings));
        assert_eq!(stability_kendall(&[r]), Err(AttributionError::TooFewRankings(1)));
    }

    proptest! {
        #[test]
        fn axioms(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = random_model(&mut rng, 5, 3);
            // feature 4 is a dummy player
            model.beta[4] = 0.0;
            model.pairs.retain(|p| p.0 != 4 && p.1 != 4);
            let mu = draws(&mut rng, 5);
            let x = draws(&mut rng, 5);
            let (phi, phi0) = shapley_closed_form(&model, &mu, &x).unwrap();
            prop_assert_eq!(phi[4], 0.0);
            prop_assert!((phi0 + phi.iter().sum::<f64>() - model.eval(&x)).abs() < 1e-10);

            // symmetric players 0 and 1
            let sym = PairwiseModel { intercept: 0.0, beta: vec![1.5, 1.5, 0.7], pairs: vec![(0, 2, 0.9), (1, 2, 0.9)] };
            let (p, _) = shapley_closed_form(&sym, &[0.3, 0.3, mu[2]], &[x[0], x[0], x[2]]).unwrap();
            prop_assert!((p[0] - p[1]).abs() < 1e-14);

            // shares do not depend on a common scale
            let res: Vec<AttributionResult> = (0..4).map(|i| result(&["a", "b", "c"], &[phi[0] + i as f64, phi[1], phi[2] - 1.0])).collect();
            let scaled: Vec<AttributionResult> = res.iter().map(|r| result(&["a", "b", "c"], &r.phi.iter().map(|v| v * scale).collect::<Vec<_>>())).collect();
            if let (Ok(a), Ok(b)) = (importance_summary(&res), importance_summary(&scaled)) {
                prop_assert_eq!(&a.ranking, &b.ranking);
                for ((_, u), (_, v)) in a.shares.iter().zip(&b.shares) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
                prop_assert!((a.shares.iter().map(|s| s.1).sum::<f64>() - 100.0).abs() < 1e-9);
            }
        }
    }
}
