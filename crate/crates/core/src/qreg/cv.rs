//! Expanding-window cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::DesignMatrix;
use super::model::{fit_quantile, intercept_only_loss, MIN_ROWS};
use super::{check_loss, QregError};
use crate::month::Month;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    /// Training rows `0..train_end`, test rows `train_end..test_end`.
    pub train_end: usize,
    pub test_end: usize,
    pub last_train_month: Month,
    pub first_test_month: Month,
    pub mae: f64,
    pub pseudo_r2: f64,
    /// `[intercept, betas..., gammas...]` of the fold's model.
    pub coefficients: Vec<f64>,
    #[serde(skip)]
    model_loss: f64,
    #[serde(skip)]
    baseline_loss: f64,
    #[serde(skip)]
    abs_error_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub tau: f64,
    pub initial_window: usize,
    pub step: usize,
    pub folds: Vec<CvFold>,
    pub pooled_mae: f64,
    pub pooled_pseudo_r2: f64,
    pub coefficient_names: Vec<String>,
    pub notes: Vec<String>,
}

/// Walk-forward evaluation: fold `k` trains on the first
/// `initial_window + k*step` rows and tests on the next `step` rows. Only
/// complete test blocks are used.
///
/// With `crisis` set, the initial window is shortened (never below the
/// minimum fit size) so that the crisis month falls in a test block.
pub fn expanding_window_cv(
    x: &DesignMatrix,
    tau: f64,
    initial_window: usize,
    step: usize,
    crisis: Option<Month>,
) -> Result<CvReport, QregError> {
    check_loss(0.0, tau)?;
    let mut notes = Vec::new();
    let mut initial = initial_window;
    if initial < MIN_ROWS {
        return Err(QregError::TooFewRows { rows: initial, min: MIN_ROWS });
    }
    if step == 0 {
        return Err(QregError::InvalidSchema("cross-validation step must be positive".into()));
    }
    if let Some(c) = crisis {
        let row = x.months.partition_point(|m| *m < c);
        if row < initial {
            if row >= MIN_ROWS {
                notes.push(format!("initial window shortened from {initial} to {row} to test on the crisis month {c}"));
                initial = row;
            } else {
                notes.push(format!("crisis month {c} lies within the first {MIN_ROWS} rows and cannot be tested"));
            }
        }
    }
    let t = x.n_rows();
    let n_folds = t.saturating_sub(initial) / step;
    if n_folds < 2 {
        return Err(QregError::InsufficientFolds { rows: t, initial_window: initial, step });
    }
    let folds: Vec<CvFold> = (0..n_folds)
        .into_par_iter()
        .map(|k| {
            let train_end = initial + k * step;
            let test_end = train_end + step;
            let train = x.slice(0, train_end);
            let test = x.slice(train_end, test_end);
            assert!(train.months.last() < test.months.first(), "lookahead in fold {k}");
            let model = fit_quantile(&train, tau)?;
            let mut model_loss = 0.0;
            let mut abs_error_sum = 0.0;
            for (row, y) in test.values.iter().zip(&test.target) {
                let e = y - model.predict(row);
                model_loss += check_loss(e, tau)?;
                abs_error_sum += e.abs();
            }
            let baseline_loss = intercept_only_loss(&test.target, tau)?;
            Ok(CvFold {
                train_end,
                test_end,
                last_train_month: *train.months.last().expect("non-empty"),
                first_test_month: test.months[0],
                mae: abs_error_sum / step as f64,
                pseudo_r2: if baseline_loss > 0.0 { 1.0 - model_loss / baseline_loss } else { f64::NAN },
                coefficients: model.coefficient_vector(),
                model_loss,
                baseline_loss,
                abs_error_sum,
            })
        })
        .collect::<Result<_, QregError>>()?;

    let total_model: f64 = folds.iter().map(|f| f.model_loss).sum();
    let total_base: f64 = folds.iter().map(|f| f.baseline_loss).sum();
    let total_abs: f64 = folds.iter().map(|f| f.abs_error_sum).sum();
    let names = std::iter::once("(intercept)".to_string())
        .chain(x.column_names())
        .chain(x.interaction_names().into_iter().map(|(a, b)| format!("{a}:{b}")))
        .collect();
    Ok(CvReport {
        tau,
        initial_window: initial,
        step,
        pooled_mae: total_abs / (n_folds * step) as f64,
        pooled_pseudo_r2: if total_base > 0.0 { 1.0 - total_model / total_base } else { f64::NAN },
        folds,
        coefficient_names: names,
        notes,
    })
}
