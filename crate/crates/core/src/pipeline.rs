//! The end-to-end estimation pipeline: fit a propensity model, build weights
//! for a requested scheme, and evaluate an estimator.
//!
//! [`Pipeline::run`] re-executes every stage from scratch (including the
//! `k_max` search for the full-subclassification scheme), which is exactly
//! what the bootstrap needs to re-run per resample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    doubly_robust_masked, hajek, horvitz_thompson, CausalEstimate, DrSign, EstimatorError,
    EstimatorKind, OutcomeFit,
};
use crate::glm::{fit_binary_glm, predict_scores, FitOptions, GlmError, LinkKind};
use crate::matrix::Matrix;
use crate::subclass::{find_k_max, partition_by_rank, SubclassError};
use crate::weights::{
    full_subclass_weights, implied_scores, ipw_weights, subclass_weights, trimmed_weights,
    UnitWeights, WeightError,
};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("propensity model: {0}")]
    Glm(#[from] GlmError),
    #[error("subclassification: {0}")]
    Subclass(#[from] SubclassError),
    #[error("weights: {0}")]
    Weights(#[from] WeightError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("scheme {0} is not available here (simulation truth required)")]
    UnsupportedScheme(String),
    #[error("estimator {0} is not a weighting-pipeline estimator")]
    UnsupportedEstimator(String),
}

/// A requested weighting scheme. The fitted link and trimming base come from
/// the surrounding pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SchemeSpec {
    /// Weights from the true assignment probabilities (simulation only).
    TrueScores,
    /// Inverse fitted scores.
    Ipw,
    /// Inverse fitted scores, trimmed at the pooled `quantile`.
    Trimmed { quantile: f64 },
    /// Subclassification weights with a fixed class count.
    Subclass { k: usize },
    /// Subclassification weights at `k = k_max`.
    FullSubclass,
}

impl SchemeSpec {
    pub fn label(&self) -> String {
        match self {
            SchemeSpec::TrueScores => "true".to_string(),
            SchemeSpec::Ipw => "ipw".to_string(),
            SchemeSpec::Trimmed { quantile } => format!("trimmed:{quantile}"),
            SchemeSpec::Subclass { k } => format!("subclass:{k}"),
            SchemeSpec::FullSubclass => "full_subclass".to_string(),
        }
    }
}

/// Weights for a scheme, plus the scores an estimator should pair with them
/// (fitted scores for inverse weighting, coarsened implied scores for
/// subclassification schemes).
pub fn scheme_weights_and_scores(
    scheme: &SchemeSpec,
    fitted_scores: &[f64],
    link: LinkKind,
    treatment: &[u8],
) -> Result<(UnitWeights, Vec<f64>), PipelineError> {
    match scheme {
        SchemeSpec::TrueScores => Err(PipelineError::UnsupportedScheme("true".to_string())),
        SchemeSpec::Ipw => {
            let w = ipw_weights(fitted_scores, treatment, link)?;
            Ok((w, fitted_scores.to_vec()))
        }
        SchemeSpec::Trimmed { quantile } => {
            let base = ipw_weights(fitted_scores, treatment, link)?;
            let w = trimmed_weights(&base, *quantile)?;
            Ok((w, fitted_scores.to_vec()))
        }
        SchemeSpec::Subclass { k } => {
            let partition = partition_by_rank(fitted_scores, treatment, *k)?;
            let w = subclass_weights(&partition, treatment)?;
            let implied = implied_scores(&w, treatment)?;
            Ok((w, implied))
        }
        SchemeSpec::FullSubclass => {
            let (_, partition) = find_k_max(fitted_scores, treatment)?;
            let w = full_subclass_weights(&partition, treatment)?;
            let implied = implied_scores(&w, treatment)?;
            Ok((w, implied))
        }
    }
}

/// Everything a pipeline run consumes. Owns its buffers so resamples can be
/// materialized cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineData {
    /// Covariates entering the propensity model.
    pub ps_covariates: Matrix,
    /// Covariates entering the outcome regressions (doubly robust only).
    pub or_covariates: Matrix,
    pub outcome: Vec<f64>,
    pub treatment: Vec<u8>,
}

impl PipelineData {
    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Materializes the resampled dataset for the given row indices (with
    /// repetition).
    pub fn resample(&self, indices: &[usize]) -> PipelineData {
        PipelineData {
            ps_covariates: self.ps_covariates.select_rows(indices),
            or_covariates: self.or_covariates.select_rows(indices),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            treatment: indices.iter().map(|&i| self.treatment[i]).collect(),
        }
    }
}

/// An estimator + scheme specification that can be re-run on any dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub link: LinkKind,
    pub scheme: SchemeSpec,
    pub estimator: EstimatorKind,
    pub dr_sign: DrSign,
    pub fit_options: FitOptions,
}

impl Pipeline {
    /// Runs the full pipeline: propensity fit, scheme weights (re-finding
    /// `k_max` where applicable), then the estimator.
    pub fn run(&self, data: &PipelineData) -> Result<CausalEstimate, PipelineError> {
        let fit = fit_binary_glm(
            &data.ps_covariates,
            &data.treatment,
            self.link,
            &self.fit_options,
        )?;
        let scores = predict_scores(&fit, &data.ps_covariates)?;
        let (weights, dr_scores) =
            scheme_weights_and_scores(&self.scheme, &scores, self.link, &data.treatment)?;
        match self.estimator {
            EstimatorKind::HorvitzThompson => {
                Ok(horvitz_thompson(&data.outcome, &data.treatment, &weights)?)
            }
            EstimatorKind::Hajek => Ok(hajek(&data.outcome, &data.treatment, &weights)?),
            EstimatorKind::DoublyRobust => {
                let outcome_fit = crate::estimators::fit_outcome_regression(
                    &data.or_covariates,
                    &data.outcome,
                    &data.treatment,
                )?;
                Ok(self.run_dr(data, &dr_scores, &outcome_fit, &weights)?)
            }
            other => Err(PipelineError::UnsupportedEstimator(
                other.label().to_string(),
            )),
        }
    }

    fn run_dr(
        &self,
        data: &PipelineData,
        scores: &[f64],
        outcome_fit: &OutcomeFit,
        weights: &UnitWeights,
    ) -> Result<CausalEstimate, EstimatorError> {
        doubly_robust_masked(
            &data.outcome,
            &data.treatment,
            scores,
            outcome_fit,
            &data.or_covariates,
            &weights.included,
            self.dr_sign,
        )
    }
}
