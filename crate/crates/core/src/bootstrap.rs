//! Nonparametric bootstrap standard errors and Wald confidence intervals.
//!
//! Each resample draws N unit indices with replacement and re-executes the
//! entire pipeline — propensity fit, `k_max` search, weighting, estimation —
//! so the interval reflects uncertainty in every stage, including the number
//! of subclasses. Intervals are Wald (`point ± z * se`) centered at the
//! full-sample point estimate; percentile intervals are also reported as a
//! diagnostic.
//!
//! Resample index streams are a pure function of `(seed, resample_index)`:
//! stream `r` is `CounterRng::new(seed).derive(r)` and draw `j` is its
//! `index(j, n)` value, so runs are identical regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Pipeline, PipelineData, PipelineError};
use crate::rng::{standard_normal_quantile, CounterRng};
use crate::weights::nearest_rank_quantile;

#[derive(Debug, Error, PartialEq)]
pub enum BootstrapError {
    #[error("{failures} of {replicates} resamples failed (more than 5%)")]
    TooManyFailures { failures: usize, replicates: usize },
    #[error("need at least 2 bootstrap replicates, got {0}")]
    InvalidReplicates(usize),
    #[error("confidence level {0} is outside (0,1)")]
    InvalidLevel(f64),
    #[error("full-sample pipeline failed: {0}")]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Full-sample point estimate; Wald intervals are centered here.
    pub point: f64,
    /// Standard deviation of the resample estimates over successes.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Percentile interval over the successful resample estimates.
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub successes: usize,
    pub failures: usize,
}

/// Resample indices for resample `r` under master `seed`: N draws with
/// replacement from `0..n`.
pub fn resample_indices(seed: u64, r: u64, n: usize) -> Vec<usize> {
    let stream = CounterRng::new(seed).derive(r);
    (0..n as u64).map(|j| stream.index(j, n)).collect()
}

/// Bootstrap SE and Wald CI for `pipeline` on `data`. More than 5% failed
/// resamples aborts; full-sample pipeline errors propagate.
pub fn bootstrap_ci(
    data: &PipelineData,
    pipeline: &Pipeline,
    config: &BootstrapConfig,
) -> Result<BootstrapResult, BootstrapError> {
    if config.replicates < 2 {
        return Err(BootstrapError::InvalidReplicates(config.replicates));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(BootstrapError::InvalidLevel(config.level));
    }
    let point = pipeline.run(data)?.delta;
    let n = data.n();
    let estimates: Vec<Option<f64>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let resampled = data.resample(&resample_indices(config.seed, r, n));
            pipeline.run(&resampled).ok().map(|e| e.delta)
        })
        .collect();
    let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
    let failures = config.replicates - ok.len();
    if failures as f64 > 0.05 * config.replicates as f64 {
        return Err(BootstrapError::TooManyFailures {
            failures,
            replicates: config.replicates,
        });
    }
    let m = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / m;
    let var = ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let se = var.max(0.0).sqrt();
    let z = standard_normal_quantile((1.0 + config.level) / 2.0);
    let mut sorted = ok;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates"));
    let alpha = (1.0 - config.level) / 2.0;
    Ok(BootstrapResult {
        point,
        se,
        ci_low: point - z * se,
        ci_high: point + z * se,
        percentile_low: nearest_rank_quantile(&sorted, alpha),
        percentile_high: nearest_rank_quantile(&sorted, 1.0 - alpha),
        successes: sorted.len(),
        failures,
    })
}
