//! Binary-response generalized linear models fit by iteratively reweighted
//! least squares, used to estimate propensity scores.
//!
//! Two links are supported: the logistic link with mean
//! `mu(eta) = exp(eta) / (1 + exp(eta))` and the complementary log-log link
//! with mean `mu(eta) = 1 - exp(-exp(eta))`. Both map the real line strictly
//! increasingly into (0, 1).
//!
//! Fitting numerics (none of which the underlying methodology pins down) are:
//! deviance-based convergence `|dev_t - dev_{t-1}| < tol * (|dev_t| + 0.1)`
//! with `tol = 1e-8` and at most 100 iterations by default; step-halving (up
//! to 10 halvings) when an IRLS step would increase the deviance; and a final
//! score-equation check requiring the log-likelihood gradient to be within
//! `10 * tol` in max-abs before a fit reports convergence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{dot, solve_spd, Matrix};

/// Predictions are clipped to `[SCORE_CLIP, 1 - SCORE_CLIP]` so downstream
/// inverse weights stay finite. Coefficients are never clipped.
pub const SCORE_CLIP: f64 = 1e-12;

/// Fitted coefficients beyond this magnitude flag likely separation.
pub const SEPARATION_THRESHOLD: f64 = 1e4;

/// Linear predictors are clamped to this magnitude inside the cloglog mean
/// function to avoid overflow in `exp(exp(eta))`.
const ETA_CLAMP: f64 = 30.0;

/// Floor for the Bernoulli variance inside the IRLS weights and deviance.
const MU_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("weighted normal equations are singular (collinear covariates?)")]
    RankDeficient,
    #[error(
        "IRLS did not converge in {iterations} iterations (last deviance change {last_change:e})"
    )]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("treatment vector is all zeros or all ones")]
    DegenerateTreatment,
    #[error("covariate width {actual} does not match the fit ({expected})")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need at least {needed} rows for {p} covariates, got {actual}")]
    TooFewRows {
        needed: usize,
        p: usize,
        actual: usize,
    },
}

/// The mean function of the binary GLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Logit,
    Cloglog,
}

impl LinkKind {
    /// mu(eta), strictly increasing into (0, 1).
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkKind::Cloglog => {
                let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
                -(-eta.exp()).exp_m1()
            }
        }
    }

    /// d mu / d eta.
    pub fn mean_derivative(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                let mu = self.mean(eta);
                mu * (1.0 - mu)
            }
            LinkKind::Cloglog => {
                let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
                (eta - eta.exp()).exp()
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LinkKind::Logit => "logit",
            LinkKind::Cloglog => "cloglog",
        }
    }
}

/// IRLS stopping controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// A fitted propensity model: intercept-first coefficients plus convergence
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    /// Length `#covariates + 1`, intercept first.
    pub coefficients: Vec<f64>,
    pub link: LinkKind,
    pub converged: bool,
    pub iterations: usize,
    pub final_deviance: f64,
    /// Set when any coefficient exceeds [`SEPARATION_THRESHOLD`] in
    /// magnitude, a symptom of complete or quasi-separation.
    pub separation_warning: bool,
}

/// Fits a binary GLM by IRLS, maximizing the Bernoulli likelihood.
///
/// `treatment` entries must be 0 or 1 with both values present. The design
/// matrix is `covariates` with a prepended intercept column; it must have
/// full column rank and at least `p + 2` rows.
pub fn fit_binary_glm(
    covariates: &Matrix,
    treatment: &[u8],
    link: LinkKind,
    options: &FitOptions,
) -> Result<PropensityFit, GlmError> {
    let n = covariates.nrows();
    let p = covariates.ncols();
    if treatment.len() != n {
        return Err(GlmError::DimensionMismatch {
            expected: n,
            actual: treatment.len(),
        });
    }
    if n < p + 2 {
        return Err(GlmError::TooFewRows {
            needed: p + 2,
            p,
            actual: n,
        });
    }
    let n1: usize = treatment.iter().map(|&z| usize::from(z != 0)).sum();
    if n1 == 0 || n1 == n {
        return Err(GlmError::DegenerateTreatment);
    }
    debug_assert!(treatment.iter().all(|&z| z <= 1), "treatment must be 0/1");

    let design = covariates.with_intercept();
    let dim = p + 1;
    let mut beta = vec![0.0; dim];
    let mut deviance = bernoulli_deviance(&design, treatment, link, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let grad_tol = 10.0 * options.tol;

    while iterations < options.max_iter {
        iterations += 1;
        // Weighted normal equations, accumulated left to right over units.
        let mut xtwx = vec![0.0; dim * dim];
        let mut xtwz = vec![0.0; dim];
        for i in 0..n {
            let row = design.row(i);
            let eta = dot(row, &beta);
            let mu = link.mean(eta);
            let var = (mu * (1.0 - mu)).max(MU_EPS);
            let dmu = link.mean_derivative(eta);
            let w = dmu * dmu / var;
            // w * z with z = eta + (y - mu)/dmu, expanded so an underflowing
            // dmu cannot produce inf * 0.
            let wz = w * eta + dmu * (f64::from(treatment[i]) - mu) / var;
            for a in 0..dim {
                let xa = row[a];
                xtwz[a] += xa * wz;
                for b in a..dim {
                    xtwx[a * dim + b] += w * xa * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                xtwx[a * dim + b] = xtwx[b * dim + a];
            }
        }
        let proposal = solve_spd(&xtwx, dim, &xtwz).ok_or(GlmError::RankDeficient)?;

        // Step-halving keeps the deviance non-increasing across accepted
        // iterations; cloglog steps in particular can overshoot. The slack
        // is one notch above the deviance's own rounding noise so that
        // score-equation polishing can continue after the deviance has
        // settled (IRLS is Fisher scoring for cloglog and approaches the
        // root linearly).
        let noise = 1e-13 * (deviance.abs() + 1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&proposal)
                .map(|(&b, &s)| b + step * (s - b))
                .collect();
            let dev = bernoulli_deviance(&design, treatment, link, &candidate);
            if dev <= deviance + noise && dev.is_finite() {
                accepted = Some((candidate, dev));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, dev)) = accepted else {
            return Err(GlmError::NotConverged {
                iterations,
                last_change,
            });
        };
        last_change = (deviance - dev).abs();
        beta = candidate;
        deviance = dev;
        if last_change < options.tol * (deviance.abs() + 0.1) {
            // Deviance has settled; accept only once the score equations are
            // solved too, otherwise keep polishing.
            let grad = gradient_for_design(&design, treatment, link, &beta);
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax <= grad_tol {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        return Err(GlmError::NotConverged {
            iterations,
            last_change,
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(GlmError::NotConverged {
            iterations,
            last_change,
        });
    }
    let separation_warning = beta.iter().any(|b| b.abs() > SEPARATION_THRESHOLD);
    if separation_warning {
        log::warn!(
            "possible separation: a fitted coefficient exceeds {SEPARATION_THRESHOLD:e} in magnitude"
        );
    }
    Ok(PropensityFit {
        coefficients: beta,
        link,
        converged,
        iterations,
        final_deviance: deviance,
        separation_warning,
    })
}

/// Predicted propensity scores, clipped into `[SCORE_CLIP, 1 - SCORE_CLIP]`.
pub fn predict_scores(fit: &PropensityFit, covariates: &Matrix) -> Result<Vec<f64>, GlmError> {
    if covariates.ncols() + 1 != fit.coefficients.len() {
        return Err(GlmError::DimensionMismatch {
            expected: fit.coefficients.len() - 1,
            actual: covariates.ncols(),
        });
    }
    let mut scores = Vec::with_capacity(covariates.nrows());
    for i in 0..covariates.nrows() {
        let row = covariates.row(i);
        let mut eta = fit.coefficients[0];
        for j in 0..row.len() {
            eta += fit.coefficients[j + 1] * row[j];
        }
        scores.push(fit.link.mean(eta).clamp(SCORE_CLIP, 1.0 - SCORE_CLIP));
    }
    Ok(scores)
}

/// Bernoulli log-likelihood at `coefficients` (intercept first) for the
/// intercept-augmented design.
pub fn log_likelihood(
    coefficients: &[f64],
    covariates: &Matrix,
    treatment: &[u8],
    link: LinkKind,
) -> f64 {
    let design = covariates.with_intercept();
    -0.5 * bernoulli_deviance(&design, treatment, link, coefficients)
}

/// Gradient of the Bernoulli log-likelihood at `coefficients`.
pub fn log_likelihood_gradient(
    coefficients: &[f64],
    covariates: &Matrix,
    treatment: &[u8],
    link: LinkKind,
) -> Vec<f64> {
    let design = covariates.with_intercept();
    gradient_for_design(&design, treatment, link, coefficients)
}

fn bernoulli_deviance(design: &Matrix, treatment: &[u8], link: LinkKind, beta: &[f64]) -> f64 {
    let mut dev = 0.0;
    for i in 0..design.nrows() {
        let mu = link
            .mean(dot(design.row(i), beta))
            .clamp(MU_EPS, 1.0 - MU_EPS);
        dev += if treatment[i] != 0 {
            -2.0 * mu.ln()
        } else {
            -2.0 * (1.0 - mu).ln()
        };
    }
    dev
}

fn gradient_for_design(
    design: &Matrix,
    treatment: &[u8],
    link: LinkKind,
    beta: &[f64],
) -> Vec<f64> {
    let dim = design.ncols();
    let mut grad = vec![0.0; dim];
    for i in 0..design.nrows() {
        let row = design.row(i);
        let eta = dot(row, beta);
        let mu = link.mean(eta);
        let var = (mu * (1.0 - mu)).max(MU_EPS);
        let scale = link.mean_derivative(eta) * (f64::from(treatment[i]) - mu) / var;
        for a in 0..dim {
            grad[a] += row[a] * scale;
        }
    }
    grad
}
