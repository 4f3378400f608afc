//! Point estimators of the average causal effect.
//!
//! All estimators compute the two arm means separately, so the additive
//! effect is always exactly `mu1 - mu0` and the multiplicative effect
//! `mu1 / mu0` comes for free whenever `mu0 != 0`.
//!
//! The Horvitz-Thompson estimator keeps a fixed denominator N; units
//! excluded by trimming contribute zero to its sums. The Hajek estimator
//! normalizes weights within each arm over included units only. The doubly
//! robust estimator augments inverse weighting with per-arm outcome
//! regressions; its control-arm augmentation sign defaults to the standard
//! AIPW form `+(Z - e) m0 / (1 - e)` (the form that is actually doubly
//! robust), with [`DrSign::Paper`] available to flip it for literal
//! replication of a minus-sign variant.
//!
//! The subclassification estimator compares arm means within rank classes,
//! `sum_k (n_k/N) (ybar_{1k} - ybar_{0k})`; algebraically it is the
//! Horvitz-Thompson estimator under subclass weights, and with `k = k_max`
//! it is the full-subclassification estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{solve_spd, Matrix};
use crate::subclass::SubclassPartition;
use crate::weights::{UnitWeights, WeightScheme};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("no units")]
    EmptyData,
    #[error("an arm has no included units (or zero weight mass)")]
    EmptyArm,
    #[error("per-arm design matrix is rank deficient")]
    RankDeficient,
    #[error("arm {arm} has {count} units, need at least {needed}")]
    ArmTooSmall {
        arm: u8,
        count: usize,
        needed: usize,
    },
    #[error("score at index {index} ({value}) is not strictly inside (0,1)")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("class probability at class {class} ({value}) is not strictly inside (0,1)")]
    PkOutOfRange { class: usize, value: f64 },
    #[error("partition has a one-armed subclass")]
    InfeasiblePartition,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    HorvitzThompson,
    Hajek,
    DoublyRobust,
    Subclassification,
    ShtOracle,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::HorvitzThompson => "ht",
            EstimatorKind::Hajek => "hajek",
            EstimatorKind::DoublyRobust => "dr",
            EstimatorKind::Subclassification => "subclass",
            EstimatorKind::ShtOracle => "sht_oracle",
        }
    }
}

/// Sign convention for the control-arm augmentation of the doubly robust
/// estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrSign {
    /// `mu0_i = [(1-Z)Y + (Z-e) m0] / (1-e)` — the standard AIPW form.
    #[default]
    Standard,
    /// `mu0_i = [(1-Z)Y - (Z-e) m0] / (1-e)` — literal replication of the
    /// minus-sign display; not doubly robust.
    Paper,
}

/// A point estimate of the average causal effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEstimate {
    /// Additive effect, `mu1 - mu0` exactly.
    pub delta: f64,
    pub mu1: f64,
    pub mu0: f64,
    /// Multiplicative effect `mu1 / mu0`, defined only when `mu0 != 0`.
    pub ratio: Option<f64>,
    pub estimator: EstimatorKind,
    pub scheme: Option<WeightScheme>,
}

fn estimate(
    mu1: f64,
    mu0: f64,
    estimator: EstimatorKind,
    scheme: Option<WeightScheme>,
) -> CausalEstimate {
    CausalEstimate {
        delta: mu1 - mu0,
        mu1,
        mu0,
        ratio: if mu0 != 0.0 { Some(mu1 / mu0) } else { None },
        estimator,
        scheme,
    }
}

fn check_lengths(outcome: &[f64], treatment: &[u8]) -> Result<(), EstimatorError> {
    if outcome.len() != treatment.len() {
        return Err(EstimatorError::LengthMismatch {
            left: outcome.len(),
            right: treatment.len(),
        });
    }
    Ok(())
}

/// Horvitz-Thompson estimator: arm sums of `w * Y` over included units,
/// divided by the full N.
pub fn horvitz_thompson(
    outcome: &[f64],
    treatment: &[u8],
    weights: &UnitWeights,
) -> Result<CausalEstimate, EstimatorError> {
    check_lengths(outcome, treatment)?;
    if weights.n() != outcome.len() {
        return Err(EstimatorError::LengthMismatch {
            left: weights.n(),
            right: outcome.len(),
        });
    }
    let n = outcome.len();
    if n == 0 {
        return Err(EstimatorError::EmptyData);
    }
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    for i in 0..n {
        if !weights.included[i] {
            continue;
        }
        let wy = weights.w[i] * outcome[i];
        if treatment[i] != 0 {
            sum1 += wy;
        } else {
            sum0 += wy;
        }
    }
    let n = n as f64;
    Ok(estimate(
        sum1 / n,
        sum0 / n,
        EstimatorKind::HorvitzThompson,
        Some(weights.scheme),
    ))
}

/// Hajek estimator: weight-normalized arm means over included units.
pub fn hajek(
    outcome: &[f64],
    treatment: &[u8],
    weights: &UnitWeights,
) -> Result<CausalEstimate, EstimatorError> {
    check_lengths(outcome, treatment)?;
    if weights.n() != outcome.len() {
        return Err(EstimatorError::LengthMismatch {
            left: weights.n(),
            right: outcome.len(),
        });
    }
    let mut num = [0.0f64; 2];
    let mut den = [0.0f64; 2];
    for i in 0..outcome.len() {
        if !weights.included[i] {
            continue;
        }
        let arm = usize::from(treatment[i] != 0);
        num[arm] += weights.w[i] * outcome[i];
        den[arm] += weights.w[i];
    }
    if den[0] == 0.0 || den[1] == 0.0 {
        return Err(EstimatorError::EmptyArm);
    }
    Ok(estimate(
        num[1] / den[1],
        num[0] / den[0],
        EstimatorKind::Hajek,
        Some(weights.scheme),
    ))
}

/// Per-arm ordinary least squares fits of the outcome on the covariates,
/// intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub arm0: Vec<f64>,
    pub arm1: Vec<f64>,
}

impl OutcomeFit {
    /// Model prediction `m_arm(x)` for a covariate row.
    pub fn predict(&self, arm: u8, row: &[f64]) -> f64 {
        let coef = if arm != 0 { &self.arm1 } else { &self.arm0 };
        let mut v = coef[0];
        for j in 0..row.len() {
            v += coef[j + 1] * row[j];
        }
        v
    }
}

/// Fits ordinary least squares separately within each arm.
pub fn fit_outcome_regression(
    covariates: &Matrix,
    outcome: &[f64],
    treatment: &[u8],
) -> Result<OutcomeFit, EstimatorError> {
    check_lengths(outcome, treatment)?;
    if covariates.nrows() != outcome.len() {
        return Err(EstimatorError::LengthMismatch {
            left: covariates.nrows(),
            right: outcome.len(),
        });
    }
    let p = covariates.ncols();
    let needed = p + 2;
    let mut coefs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for arm in 0..2u8 {
        let rows: Vec<usize> = (0..outcome.len())
            .filter(|&i| (treatment[i] != 0) == (arm != 0))
            .collect();
        if rows.len() < needed {
            return Err(EstimatorError::ArmTooSmall {
                arm,
                count: rows.len(),
                needed,
            });
        }
        let dim = p + 1;
        let mut xtx = vec![0.0; dim * dim];
        let mut xty = vec![0.0; dim];
        let mut aug = vec![0.0; dim];
        for &i in &rows {
            aug[0] = 1.0;
            aug[1..].copy_from_slice(covariates.row(i));
            for a in 0..dim {
                xty[a] += aug[a] * outcome[i];
                for b in a..dim {
                    xtx[a * dim + b] += aug[a] * aug[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                xtx[a * dim + b] = xtx[b * dim + a];
            }
        }
        coefs[arm as usize] = solve_spd(&xtx, dim, &xty).ok_or(EstimatorError::RankDeficient)?;
    }
    let [arm0, arm1] = coefs;
    Ok(OutcomeFit { arm0, arm1 })
}

/// Doubly robust estimator with all units included.
pub fn doubly_robust(
    outcome: &[f64],
    treatment: &[u8],
    scores: &[f64],
    outcome_fit: &OutcomeFit,
    covariates: &Matrix,
    sign: DrSign,
) -> Result<CausalEstimate, EstimatorError> {
    let included = vec![true; outcome.len()];
    doubly_robust_masked(
        outcome,
        treatment,
        scores,
        outcome_fit,
        covariates,
        &included,
        sign,
    )
}

/// Doubly robust estimator where excluded units contribute zero to both arm
/// sums (used with trimmed weighting schemes); denominators stay at N.
pub fn doubly_robust_masked(
    outcome: &[f64],
    treatment: &[u8],
    scores: &[f64],
    outcome_fit: &OutcomeFit,
    covariates: &Matrix,
    included: &[bool],
    sign: DrSign,
) -> Result<CausalEstimate, EstimatorError> {
    check_lengths(outcome, treatment)?;
    let n = outcome.len();
    if n == 0 {
        return Err(EstimatorError::EmptyData);
    }
    if scores.len() != n || covariates.nrows() != n || included.len() != n {
        return Err(EstimatorError::LengthMismatch {
            left: scores.len(),
            right: n,
        });
    }
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    for i in 0..n {
        if !included[i] {
            continue;
        }
        let e = scores[i];
        if !(e > 0.0 && e < 1.0) {
            return Err(EstimatorError::ScoreOutOfRange { index: i, value: e });
        }
        let z = f64::from(treatment[i]);
        let y = outcome[i];
        let row = covariates.row(i);
        let m1 = outcome_fit.predict(1, row);
        let m0 = outcome_fit.predict(0, row);
        sum1 += (z * y - (z - e) * m1) / e;
        let aug = match sign {
            DrSign::Standard => (z - e) * m0,
            DrSign::Paper => -(z - e) * m0,
        };
        sum0 += ((1.0 - z) * y + aug) / (1.0 - e);
    }
    let n = n as f64;
    Ok(estimate(
        sum1 / n,
        sum0 / n,
        EstimatorKind::DoublyRobust,
        None,
    ))
}

/// Subclassification estimator: class-share weighted differences of
/// within-class arm means. With the `find_k_max` partition this is the
/// full-subclassification estimator.
pub fn subclassification_estimate(
    outcome: &[f64],
    treatment: &[u8],
    partition: &SubclassPartition,
) -> Result<CausalEstimate, EstimatorError> {
    check_lengths(outcome, treatment)?;
    if partition.n() != outcome.len() {
        return Err(EstimatorError::LengthMismatch {
            left: partition.n(),
            right: outcome.len(),
        });
    }
    if outcome.is_empty() {
        return Err(EstimatorError::EmptyData);
    }
    if !partition.is_feasible() {
        return Err(EstimatorError::InfeasiblePartition);
    }
    // Class sums accumulate in original unit order so that the k = 1 case
    // agrees exactly with a plain difference in arm means.
    let k = partition.k;
    let mut sum1 = vec![0.0; k];
    let mut sum0 = vec![0.0; k];
    for i in 0..outcome.len() {
        let c = partition.class_of[i];
        if treatment[i] != 0 {
            sum1[c] += outcome[i];
        } else {
            sum0[c] += outcome[i];
        }
    }
    let n = outcome.len() as f64;
    let mut mu1 = 0.0;
    let mut mu0 = 0.0;
    for c in 0..k {
        let share = partition.n_k[c] as f64 / n;
        mu1 += share * (sum1[c] / partition.n1_k[c] as f64);
        mu0 += share * (sum0[c] / partition.n0_k[c] as f64);
    }
    Ok(estimate(
        mu1,
        mu0,
        EstimatorKind::Subclassification,
        Some(WeightScheme::Subclass { k }),
    ))
}

/// The infeasible stratified Horvitz-Thompson estimator that uses the true
/// per-class assignment probabilities `p_k` (simulation oracle):
/// `(1/N) sum_i [Y_i I(Z_i=1)/p_{k_i} - Y_i I(Z_i=0)/(1 - p_{k_i})]`.
pub fn s_ht_oracle(
    outcome: &[f64],
    treatment: &[u8],
    partition: &SubclassPartition,
    true_pk: &[f64],
) -> Result<CausalEstimate, EstimatorError> {
    check_lengths(outcome, treatment)?;
    if partition.n() != outcome.len() {
        return Err(EstimatorError::LengthMismatch {
            left: partition.n(),
            right: outcome.len(),
        });
    }
    if true_pk.len() != partition.k {
        return Err(EstimatorError::LengthMismatch {
            left: true_pk.len(),
            right: partition.k,
        });
    }
    for (class, &p) in true_pk.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(EstimatorError::PkOutOfRange { class, value: p });
        }
    }
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    for i in 0..outcome.len() {
        let p = true_pk[partition.class_of[i]];
        if treatment[i] != 0 {
            sum1 += outcome[i] / p;
        } else {
            sum0 += outcome[i] / (1.0 - p);
        }
    }
    let n = outcome.len() as f64;
    Ok(estimate(sum1 / n, sum0 / n, EstimatorKind::ShtOracle, None))
}
