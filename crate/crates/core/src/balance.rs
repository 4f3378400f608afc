//! Covariate-balance and weight-stability diagnostics.
//!
//! The standardized imbalance measure is the Mahalanobis-type norm
//! `Imb = sqrt(d' G^-1 d)` with
//! `d = (1/N) sum_i (Z_i w_i - (1-Z_i) w_i) X_i` and the raw uncentered Gram
//! matrix `G = (1/N) sum_i X_i X_i'`. Weights enter exactly as produced by
//! the scheme (no renormalization); units excluded by trimming contribute
//! zero to `d` but still appear in `G`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{invert_with_condition, Matrix};
use crate::weights::{nearest_rank_quantile, UnitWeights};

/// Gram matrices with a 1-norm condition number above this are treated as
/// singular.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("Gram matrix is singular or near-singular (condition > 1e12)")]
    SingularGram,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Order statistics of the included weights within one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmWeightStats {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
    pub count_included: usize,
    pub count_excluded: usize,
}

/// Balance diagnostics for one weighting scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub imbalance: f64,
    pub per_covariate_weighted_diff: Vec<f64>,
    pub treated: ArmWeightStats,
    pub control: ArmWeightStats,
    pub positivity_flags: usize,
}

/// The weighted treated-minus-control covariate sum `d`, divided by N.
/// Excluded units contribute zero.
pub fn weighted_difference(
    covariates: &Matrix,
    treatment: &[u8],
    weights: &UnitWeights,
) -> Result<Vec<f64>, BalanceError> {
    let n = covariates.nrows();
    if treatment.len() != n || weights.n() != n {
        return Err(BalanceError::LengthMismatch {
            left: treatment.len(),
            right: n,
        });
    }
    let p = covariates.ncols();
    let mut d = vec![0.0; p];
    for i in 0..n {
        if !weights.included[i] {
            continue;
        }
        let signed = if treatment[i] != 0 {
            weights.w[i]
        } else {
            -weights.w[i]
        };
        let row = covariates.row(i);
        for j in 0..p {
            d[j] += signed * row[j];
        }
    }
    let n = n as f64;
    for v in &mut d {
        *v /= n;
    }
    Ok(d)
}

/// The standardized imbalance `sqrt(d' G^-1 d)`.
pub fn standardized_imbalance(
    covariates: &Matrix,
    treatment: &[u8],
    weights: &UnitWeights,
) -> Result<f64, BalanceError> {
    let d = weighted_difference(covariates, treatment, weights)?;
    let n = covariates.nrows();
    let p = covariates.ncols();
    let mut gram = vec![0.0; p * p];
    for i in 0..n {
        let row = covariates.row(i);
        for a in 0..p {
            for b in a..p {
                gram[a * p + b] += row[a] * row[b];
            }
        }
    }
    let n = n as f64;
    for a in 0..p {
        for b in a..p {
            gram[a * p + b] /= n;
            gram[b * p + a] = gram[a * p + b];
        }
    }
    let (inv, cond) = invert_with_condition(&gram, p).ok_or(BalanceError::SingularGram)?;
    if cond > GRAM_CONDITION_LIMIT {
        return Err(BalanceError::SingularGram);
    }
    let mut quad = 0.0;
    for a in 0..p {
        for b in 0..p {
            quad += d[a] * inv[a * p + b] * d[b];
        }
    }
    Ok(quad.max(0.0).sqrt())
}

/// Per-arm order statistics of included weights plus exclusion counts.
pub fn weight_summary(weights: &UnitWeights, treatment: &[u8]) -> (ArmWeightStats, ArmWeightStats) {
    let mut arms: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut excluded = [0usize; 2];
    for i in 0..weights.n() {
        let arm = usize::from(treatment[i] != 0);
        if weights.included[i] {
            arms[arm].push(weights.w[i]);
        } else {
            excluded[arm] += 1;
        }
    }
    let stats = |values: &mut Vec<f64>, count_excluded: usize| {
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        if values.is_empty() {
            return ArmWeightStats {
                min: f64::NAN,
                q05: f64::NAN,
                q25: f64::NAN,
                median: f64::NAN,
                q75: f64::NAN,
                q95: f64::NAN,
                max: f64::NAN,
                count_included: 0,
                count_excluded,
            };
        }
        ArmWeightStats {
            min: values[0],
            q05: nearest_rank_quantile(values, 0.05),
            q25: nearest_rank_quantile(values, 0.25),
            median: nearest_rank_quantile(values, 0.5),
            q75: nearest_rank_quantile(values, 0.75),
            q95: nearest_rank_quantile(values, 0.95),
            max: values[values.len() - 1],
            count_included: values.len(),
            count_excluded,
        }
    };
    let [mut control, mut treated] = arms;
    (
        stats(&mut treated, excluded[1]),
        stats(&mut control, excluded[0]),
    )
}

/// Indices of scores outside `[delta, 1 - delta]`. Purely diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityCheck {
    pub delta: f64,
    pub flagged: Vec<usize>,
}

impl PositivityCheck {
    pub fn count(&self) -> usize {
        self.flagged.len()
    }
}

pub fn positivity_check(scores: &[f64], delta: f64) -> PositivityCheck {
    let flagged = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < delta || s > 1.0 - delta)
        .map(|(i, _)| i)
        .collect();
    PositivityCheck { delta, flagged }
}

/// Assembles the full balance report for one weighting scheme.
pub fn balance_report(
    covariates: &Matrix,
    treatment: &[u8],
    weights: &UnitWeights,
    scores: &[f64],
    positivity_delta: f64,
) -> Result<BalanceReport, BalanceError> {
    let imbalance = standardized_imbalance(covariates, treatment, weights)?;
    let per_covariate_weighted_diff = weighted_difference(covariates, treatment, weights)?;
    let (treated, control) = weight_summary(weights, treatment);
    Ok(BalanceReport {
        imbalance,
        per_covariate_weighted_diff,
        treated,
        control,
        positivity_flags: positivity_check(scores, positivity_delta).count(),
    })
}
