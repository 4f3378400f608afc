//! Per-unit weight construction for every weighting scheme.
//!
//! Schemes: plain inverse-probability weights from model scores, the same
//! weights trimmed at a pooled quantile, subclassification weights built from
//! coarsened treated proportions, and (in simulations) weights from the true
//! assignment probabilities.
//!
//! A subclassification weight replaces the unit-level score by its class
//! proportion: treated units in class k get `n_k / n1_k` and controls get
//! `n_k / n0_k`, so reciprocals of these weights are coarsened propensity
//! scores and always lie inside the unit interval when the partition is
//! feasible. With `k = k_max` these are the full-subclassification weights.
//!
//! Trimming is exclusion, not capping: units whose weight strictly exceeds
//! the pooled nearest-rank quantile (computed once over all N base weights)
//! are masked out. How excluded units enter an estimator is that estimator's
//! contract; no normalization happens here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::LinkKind;
use crate::subclass::SubclassPartition;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("score at index {index} ({value}) is not strictly inside (0,1)")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("partition has a one-armed subclass, weights are undefined")]
    InfeasiblePartition,
    #[error("trim quantile {0} is outside (0,1)")]
    InvalidQuantile(f64),
    #[error("weight at index {index} is zero")]
    ZeroWeight { index: usize },
    #[error("operation requires all units included, but some are excluded")]
    HasExclusions,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Provenance of a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightScheme {
    /// Inverse of fitted scores from the given link.
    Ipw { link: LinkKind },
    /// Inverse of the true assignment probabilities (simulation only).
    TrueWeights,
    /// IPW weights trimmed at the pooled `quantile`.
    Trimmed { quantile: f64 },
    /// Subclassification weights with a fixed class count.
    Subclass { k: usize },
    /// Subclassification weights at `k = k_max`.
    FullSubclass,
}

impl WeightScheme {
    pub fn label(&self) -> String {
        match self {
            WeightScheme::Ipw { link } => format!("ipw_{}", link.label()),
            WeightScheme::TrueWeights => "true".to_string(),
            WeightScheme::Trimmed { quantile } => format!("trimmed_{quantile}"),
            WeightScheme::Subclass { k } => format!("subclass_{k}"),
            WeightScheme::FullSubclass => "full_subclass".to_string(),
        }
    }
}

/// A weight vector plus inclusion mask and scheme provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitWeights {
    /// Arm-appropriate weight per unit.
    pub w: Vec<f64>,
    /// `false` marks units excluded by trimming.
    pub included: Vec<bool>,
    pub scheme: WeightScheme,
}

impl UnitWeights {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn all_included(&self) -> bool {
        self.included.iter().all(|&b| b)
    }

    pub fn excluded_count(&self) -> usize {
        self.included.iter().filter(|&&b| !b).count()
    }
}

/// Inverse-probability weights: `1/e` for treated, `1/(1-e)` for controls.
pub fn ipw_weights(
    scores: &[f64],
    treatment: &[u8],
    link: LinkKind,
) -> Result<UnitWeights, WeightError> {
    inverse_score_weights(scores, treatment, WeightScheme::Ipw { link })
}

/// IPW weights from the true assignment probabilities (simulation truth).
pub fn true_score_weights(scores: &[f64], treatment: &[u8]) -> Result<UnitWeights, WeightError> {
    inverse_score_weights(scores, treatment, WeightScheme::TrueWeights)
}

fn inverse_score_weights(
    scores: &[f64],
    treatment: &[u8],
    scheme: WeightScheme,
) -> Result<UnitWeights, WeightError> {
    if scores.len() != treatment.len() {
        return Err(WeightError::LengthMismatch {
            left: scores.len(),
            right: treatment.len(),
        });
    }
    let mut w = Vec::with_capacity(scores.len());
    for (i, (&e, &z)) in scores.iter().zip(treatment).enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(WeightError::ScoreOutOfRange { index: i, value: e });
        }
        w.push(if z != 0 { 1.0 / e } else { 1.0 / (1.0 - e) });
    }
    Ok(UnitWeights {
        included: vec![true; w.len()],
        w,
        scheme,
    })
}

/// Subclassification weights `n_k / n_{zk}` from a feasible partition.
pub fn subclass_weights(
    partition: &SubclassPartition,
    treatment: &[u8],
) -> Result<UnitWeights, WeightError> {
    subclass_weights_tagged(
        partition,
        treatment,
        WeightScheme::Subclass { k: partition.k },
    )
}

/// Same weights as [`subclass_weights`], tagged as full-subclassification.
/// Call with the partition returned by `find_k_max`.
pub fn full_subclass_weights(
    partition: &SubclassPartition,
    treatment: &[u8],
) -> Result<UnitWeights, WeightError> {
    subclass_weights_tagged(partition, treatment, WeightScheme::FullSubclass)
}

fn subclass_weights_tagged(
    partition: &SubclassPartition,
    treatment: &[u8],
    scheme: WeightScheme,
) -> Result<UnitWeights, WeightError> {
    if partition.n() != treatment.len() {
        return Err(WeightError::LengthMismatch {
            left: partition.n(),
            right: treatment.len(),
        });
    }
    if !partition.is_feasible() {
        return Err(WeightError::InfeasiblePartition);
    }
    debug_assert_eq!(
        partition.n1_k.iter().sum::<usize>(),
        treatment
            .iter()
            .map(|&z| usize::from(z != 0))
            .sum::<usize>(),
        "treatment vector does not match the partition"
    );
    let mut w = Vec::with_capacity(partition.n());
    for (unit, &z) in treatment.iter().enumerate() {
        let k = partition.class_of[unit];
        let n_k = partition.n_k[k] as f64;
        w.push(if z != 0 {
            n_k / partition.n1_k[k] as f64
        } else {
            n_k / partition.n0_k[k] as f64
        });
    }
    Ok(UnitWeights {
        included: vec![true; w.len()],
        w,
        scheme,
    })
}

/// Masks out units whose weight strictly exceeds the pooled nearest-rank
/// `quantile` of the base weights. Included weights are unchanged; the
/// quantile is computed once over all N base weights, so re-applying with the
/// same base is a no-op on top of the first pass.
pub fn trimmed_weights(base: &UnitWeights, quantile: f64) -> Result<UnitWeights, WeightError> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(WeightError::InvalidQuantile(quantile));
    }
    if !base.all_included() {
        return Err(WeightError::HasExclusions);
    }
    let mut sorted = base.w.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let threshold = nearest_rank_quantile(&sorted, quantile);
    let included: Vec<bool> = base.w.iter().map(|&w| w <= threshold).collect();
    Ok(UnitWeights {
        w: base.w.clone(),
        included,
        scheme: WeightScheme::Trimmed { quantile },
    })
}

/// Scores implied by inverse weights: `1/w` for treated, `1 - 1/w` for
/// controls. For subclassification weights these are the coarsened scores
/// and lie in (0, 1).
pub fn implied_scores(weights: &UnitWeights, treatment: &[u8]) -> Result<Vec<f64>, WeightError> {
    if weights.n() != treatment.len() {
        return Err(WeightError::LengthMismatch {
            left: weights.n(),
            right: treatment.len(),
        });
    }
    if !weights.all_included() {
        return Err(WeightError::HasExclusions);
    }
    let mut scores = Vec::with_capacity(weights.n());
    for (i, (&w, &z)) in weights.w.iter().zip(treatment).enumerate() {
        if w == 0.0 {
            return Err(WeightError::ZeroWeight { index: i });
        }
        scores.push(if z != 0 { 1.0 / w } else { 1.0 - 1.0 / w });
    }
    Ok(scores)
}

/// Nearest-rank quantile of an ascending-sorted slice: the value at rank
/// `ceil(q * n)` (1-based).
pub fn nearest_rank_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}
