//! Quantile-regression fits on standardized designs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{ColumnKind, DesignMatrix, FeatureSchema};
use super::solver::{self, objective};
use super::{check_loss, QregError};
use crate::stats::{mean, sample_std};

/// Smallest training sample accepted by [`fit_quantile`].
pub const MIN_ROWS: usize = 10;

/// Training-window location and scale per base column. Dummies keep
/// `(0, 1)`; `None` marks a column dropped for zero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub center: Vec<f64>,
    pub scale: Vec<Option<f64>>,
}

impl Standardizer {
    pub fn fit(x: &DesignMatrix) -> Self {
        let p = x.columns.len();
        let mut center = vec![0.0; p];
        let mut scale = vec![None; p];
        for (j, col) in x.columns.iter().enumerate() {
            let v: Vec<f64> = x.values.iter().map(|r| r[j]).collect();
            let sd = sample_std(&v).unwrap_or(0.0);
            if sd > 0.0 {
                match col.kind {
                    ColumnKind::Continuous => {
                        center[j] = mean(&v);
                        scale[j] = Some(sd);
                    }
                    ColumnKind::Dummy => scale[j] = Some(1.0),
                }
            }
        }
        Self { center, scale }
    }

    /// Standardized base row; dropped columns map to 0.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| match self.scale[j] {
                Some(s) => (v - self.center[j]) / s,
                None => 0.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCoefficient {
    pub left: String,
    pub right: String,
    pub value: f64,
}

/// `y = intercept + sum beta_j z_j + sum gamma_jk z_j z_k` on standardized
/// base columns `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    pub tau: f64,
    pub intercept: f64,
    /// One entry per base column, in schema order; dropped columns carry 0.
    pub betas: Vec<Coefficient>,
    /// One entry per declared pair, in schema order.
    pub gammas: Vec<InteractionCoefficient>,
    pub objective_value: f64,
    pub schema: FeatureSchema,
    pub standardizer: Standardizer,
    /// Positions of the interaction parents among the base columns.
    pub interaction_index: Vec<(usize, usize)>,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
    pub n_train: usize,
}

impl QuantileModel {
    pub fn n_features(&self) -> usize {
        self.betas.len()
    }

    /// Prediction from an already standardized base row.
    pub fn predict_standardized(&self, z: &[f64]) -> f64 {
        let mut f = self.intercept;
        for (b, zj) in self.betas.iter().zip(z) {
            f += b.value * zj;
        }
        for (g, &(j, k)) in self.gammas.iter().zip(&self.interaction_index) {
            f += g.value * z[j] * z[k];
        }
        f
    }

    pub fn predict(&self, raw_row: &[f64]) -> f64 {
        self.predict_standardized(&self.standardizer.apply(raw_row))
    }

    /// Summed check loss on `x`.
    pub fn loss_on(&self, x: &DesignMatrix) -> f64 {
        x.values
            .iter()
            .zip(&x.target)
            .map(|(row, y)| check_loss(y - self.predict(row), self.tau).expect("tau validated at fit"))
            .sum()
    }

    /// Coefficient vector `[intercept, betas..., gammas...]`.
    pub fn coefficient_vector(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.betas.iter().map(|b| b.value))
            .chain(self.gammas.iter().map(|g| g.value))
            .collect()
    }

    /// Rebuilds a model from a coefficient vector (for perturbation probes).
    pub fn with_coefficients(&self, coef: &[f64]) -> Self {
        let mut m = self.clone();
        m.intercept = coef[0];
        let p = m.betas.len();
        for (b, v) in m.betas.iter_mut().zip(&coef[1..=p]) {
            b.value = *v;
        }
        for (g, v) in m.gammas.iter_mut().zip(&coef[p + 1..]) {
            g.value = *v;
        }
        m
    }
}

/// Fits the `tau`-quantile of the target on standardized base columns and
/// their declared interactions.
///
/// Columns with zero variance on `x`, interactions of such columns, and
/// columns linearly dependent on earlier ones are dropped with a warning.
pub fn fit_quantile(x: &DesignMatrix, tau: f64) -> Result<QuantileModel, QregError> {
    check_loss(0.0, tau)?;
    let t = x.n_rows();
    if t < MIN_ROWS {
        return Err(QregError::TooFewRows { rows: t, min: MIN_ROWS });
    }
    if x.target.iter().all(|&v| v == x.target[0]) {
        return Err(QregError::ConstantTarget);
    }
    let standardizer = Standardizer::fit(x);
    let z: Vec<Vec<f64>> = x.values.iter().map(|r| standardizer.apply(r)).collect();
    let p = x.columns.len();
    let names = x.column_names();

    let mut warnings = Vec::new();
    let mut dropped = Vec::new();
    // candidate columns: base j -> Base(j), interaction k -> Pair(k)
    let mut candidates: Vec<(Term, Vec<f64>)> = Vec::new();
    for j in 0..p {
        if standardizer.scale[j].is_none() {
            warnings.push(format!("dropped `{}`: zero variance in the training window", names[j]));
            dropped.push(names[j].clone());
            continue;
        }
        candidates.push((Term::Base(j), z.iter().map(|r| r[j]).collect()));
    }
    for (k, &(a, b)) in x.interactions.iter().enumerate() {
        let label = format!("{}:{}", names[a], names[b]);
        if standardizer.scale[a].is_none() || standardizer.scale[b].is_none() {
            warnings.push(format!("dropped `{label}`: parent column dropped"));
            dropped.push(label);
            continue;
        }
        let col: Vec<f64> = z.iter().map(|r| r[a] * r[b]).collect();
        if col.iter().all(|&v| v == col[0]) {
            warnings.push(format!("dropped `{label}`: zero variance in the training window"));
            dropped.push(label);
            continue;
        }
        candidates.push((Term::Pair(k), col));
    }

    // greedy rank check against the intercept and earlier columns
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_element(t, 1.0 / (t as f64).sqrt())];
    let mut kept: Vec<(Term, Vec<f64>)> = Vec::new();
    for (term, col) in candidates {
        let v0 = DVector::from_column_slice(&col);
        let mut v = v0.clone();
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        if v.norm() > 1e-9 * v0.norm().max(1e-300) {
            let vn = v.norm();
            basis.push(v / vn);
            kept.push((term, col));
        } else {
            let label = term.label(&names, &x.interactions);
            warnings.push(format!("dropped `{label}`: linearly dependent on other columns"));
            dropped.push(label);
        }
    }
    for w in &warnings {
        log::debug!("quantile fit (tau = {tau}): {w}");
    }

    let k = kept.len();
    let mat = DMatrix::from_fn(t, k + 1, |i, j| if j == 0 { 1.0 } else { kept[j - 1].1[i] });
    let sol = solver::solve(&mat, &x.target, tau, Some(0))?;

    let mut betas: Vec<Coefficient> = names.iter().map(|n| Coefficient { term: n.clone(), value: 0.0 }).collect();
    let mut gammas: Vec<InteractionCoefficient> = x
        .interactions
        .iter()
        .map(|&(a, b)| InteractionCoefficient {
            left: names[a].clone(),
            right: names[b].clone(),
            value: 0.0,
        })
        .collect();
    for ((term, _), v) in kept.iter().zip(&sol.coef[1..]) {
        match *term {
            Term::Base(j) => betas[j].value = *v,
            Term::Pair(k) => gammas[k].value = *v,
        }
    }
    Ok(QuantileModel {
        tau,
        intercept: sol.coef[0],
        betas,
        gammas,
        objective_value: objective(&mat, &x.target, tau, &sol.coef),
        schema: x.schema.clone(),
        standardizer,
        interaction_index: x.interactions.clone(),
        dropped,
        warnings,
        n_train: t,
    })
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Base(usize),
    Pair(usize),
}

impl Term {
    fn label(&self, names: &[String], pairs: &[(usize, usize)]) -> String {
        match *self {
            Term::Base(j) => names[j].clone(),
            Term::Pair(k) => format!("{}:{}", names[pairs[k].0], names[pairs[k].1]),
        }
    }
}

/// Summed check loss of the best constant on `y` (its lower
/// `tau`-order statistic).
pub fn intercept_only_loss(y: &[f64], tau: f64) -> Result<f64, QregError> {
    check_loss(0.0, tau)?;
    if y.is_empty() {
        return Err(QregError::TooFewRows { rows: 0, min: 1 });
    }
    let q = crate::stats::empirical_quantile(y, tau);
    Ok(y.iter().map(|v| check_loss(v - q, tau).expect("validated")).sum())
}

/// `1 - loss(model) / loss(intercept-only)` on `x`, where the baseline is the
/// best constant for `x`'s own target at the same `tau`. In-sample values lie
/// in [0, 1]; out-of-sample values may be negative.
pub fn pseudo_r2(model: &QuantileModel, x: &DesignMatrix, tau: f64) -> Result<f64, QregError> {
    let base = intercept_only_loss(&x.target, tau)?;
    if base == 0.0 {
        return Err(QregError::ConstantTarget);
    }
    let fitted: f64 = x
        .values
        .iter()
        .zip(&x.target)
        .map(|(row, y)| check_loss(y - model.predict(row), tau).expect("validated"))
        .sum();
    Ok(1.0 - fitted / base)
}
