//! Rank-based subclassification of estimated propensity scores.
//!
//! Units are sorted by (score, original index) and split into `k` contiguous
//! near-equal groups: the first `n mod k` classes hold `ceil(n/k)` units and
//! the rest hold `floor(n/k)`. A partition is feasible when every class
//! contains at least one treated and one control unit; `find_k_max` returns
//! the largest feasible class count, which defines the full-subclassification
//! estimator.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SubclassError {
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("treatment vector is all zeros or all ones")]
    DegenerateTreatment,
    #[error("score at index {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("scores ({scores}) and treatment ({treatment}) lengths differ")]
    LengthMismatch { scores: usize, treatment: usize },
}

/// Assignment of units to `k` rank-ordered subclasses with per-class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SubclassPartition {
    pub k: usize,
    /// 0-based class index per unit, in original unit order.
    pub class_of: Vec<usize>,
    /// Per-class total counts; `max - min <= 1`.
    pub n_k: Vec<usize>,
    /// Per-class treated counts.
    pub n1_k: Vec<usize>,
    /// Per-class control counts.
    pub n0_k: Vec<usize>,
    /// Per-class treated proportions `n1_k / n_k`.
    pub p_hat: Vec<f64>,
}

impl SubclassPartition {
    pub fn n(&self) -> usize {
        self.class_of.len()
    }

    /// `true` iff every class contains both arms.
    pub fn is_feasible(&self) -> bool {
        self.n1_k
            .iter()
            .zip(&self.n0_k)
            .all(|(&t, &c)| t > 0 && c > 0)
    }
}

/// `true` iff every class of `partition` contains both arms.
pub fn is_feasible(partition: &SubclassPartition) -> bool {
    partition.is_feasible()
}

/// Splits units into `k` rank-ordered classes of near-equal size.
///
/// Ties in scores are broken by original unit index, so tied units can land
/// in different classes. Scores need not lie in (0, 1) for partitioning
/// (only ranks matter), but values outside the open unit interval trigger a
/// diagnostic warning.
pub fn partition_by_rank(
    scores: &[f64],
    treatment: &[u8],
    k: usize,
) -> Result<SubclassPartition, SubclassError> {
    let order = rank_order(scores, treatment)?;
    partition_sorted(scores.len(), treatment, &order, k)
}

/// Finds the largest `k` in `1..=min(N1, N0)` whose rank partition is
/// feasible, returning that partition.
///
/// Feasibility is not monotone in `k`, so the scan walks candidate values
/// downward and keeps the first feasible one; `k = 1` always succeeds when
/// both arms are present.
pub fn find_k_max(
    scores: &[f64],
    treatment: &[u8],
) -> Result<(usize, SubclassPartition), SubclassError> {
    let order = rank_order(scores, treatment)?;
    let n = scores.len();
    let n1: usize = treatment.iter().map(|&z| usize::from(z != 0)).sum();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(SubclassError::DegenerateTreatment);
    }
    // Prefix treated counts over the sorted order make each candidate's
    // feasibility check O(k).
    let mut prefix = vec![0usize; n + 1];
    for (pos, &unit) in order.iter().enumerate() {
        prefix[pos + 1] = prefix[pos] + usize::from(treatment[unit] != 0);
    }
    for k in (1..=n1.min(n0)).rev() {
        if feasible_for_k(&prefix, n, k) {
            let partition = partition_sorted(n, treatment, &order, k)?;
            debug_assert!(partition.is_feasible());
            return Ok((k, partition));
        }
    }
    unreachable!("k = 1 is feasible whenever both arms are present");
}

fn rank_order(scores: &[f64], treatment: &[u8]) -> Result<Vec<usize>, SubclassError> {
    if scores.len() != treatment.len() {
        return Err(SubclassError::LengthMismatch {
            scores: scores.len(),
            treatment: treatment.len(),
        });
    }
    for (i, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(SubclassError::NonFiniteScore { index: i });
        }
    }
    if scores.iter().any(|&s| s <= 0.0 || s >= 1.0) {
        log::warn!("partitioning scores outside (0,1); ranks are still well-defined");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    Ok(order)
}

fn class_sizes(n: usize, k: usize) -> impl Iterator<Item = usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(move |j| base + usize::from(j < extra))
}

fn feasible_for_k(prefix: &[usize], n: usize, k: usize) -> bool {
    let mut start = 0;
    for size in class_sizes(n, k) {
        let treated = prefix[start + size] - prefix[start];
        if treated == 0 || treated == size {
            return false;
        }
        start += size;
    }
    true
}

fn partition_sorted(
    n: usize,
    treatment: &[u8],
    order: &[usize],
    k: usize,
) -> Result<SubclassPartition, SubclassError> {
    if k < 1 || k > n {
        return Err(SubclassError::InvalidK { k, n });
    }
    let mut class_of = vec![0usize; n];
    let mut n_k = vec![0usize; k];
    let mut n1_k = vec![0usize; k];
    let mut start = 0;
    for (class, size) in class_sizes(n, k).enumerate() {
        for &unit in &order[start..start + size] {
            class_of[unit] = class;
        }
        start += size;
        n_k[class] = size;
    }
    for (unit, &z) in treatment.iter().enumerate() {
        if z != 0 {
            n1_k[class_of[unit]] += 1;
        }
    }
    let n0_k: Vec<usize> = n_k.iter().zip(&n1_k).map(|(&t, &o)| t - o).collect();
    let p_hat: Vec<f64> = n1_k
        .iter()
        .zip(&n_k)
        .map(|(&a, &b)| a as f64 / b as f64)
        .collect();
    Ok(SubclassPartition {
        k,
        class_of,
        n_k,
        n1_k,
        n0_k,
        p_hat,
    })
}
