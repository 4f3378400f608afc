//! Propensity-score weighting and subclassification estimators for average
//! causal effects.
//!
//! The centerpiece is the full-subclassification weighting method: units are
//! ranked by estimated propensity score and split into the largest number of
//! near-equal classes in which every class still contains both treated and
//! control units (`k_max`); the coarsened class proportions then replace the
//! unit-level scores in any inverse-probability estimator. Under these
//! weights the Horvitz-Thompson and Hajek estimators coincide, and the
//! reciprocal weights are themselves propensity-score estimates inside the
//! unit interval.
//!
//! The crate also provides:
//! - binary GLMs (logit and complementary log-log) fit by IRLS ([`glm`]);
//! - plain, trimmed, and true inverse-probability weights ([`weights`]);
//! - Horvitz-Thompson, Hajek, doubly robust, subclassification, and oracle
//!   stratified estimators ([`estimators`]);
//! - covariate-balance and weight-stability diagnostics ([`balance`]);
//! - a seeded Monte Carlo harness over the benchmark designs ([`simulate`]);
//! - pipeline bootstrap standard errors and Wald intervals ([`bootstrap`]).
//!
//! Everything is deterministic given seeds: random streams are counter-based
//! ([`rng`]) and aggregation is order-independent, so thread counts never
//! change results.

pub mod balance;
pub mod bootstrap;
pub mod estimators;
pub mod glm;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod subclass;
pub mod weights;

pub use balance::{balance_report, positivity_check, standardized_imbalance, BalanceReport};
pub use bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapResult};
pub use estimators::{
    doubly_robust, fit_outcome_regression, hajek, horvitz_thompson, subclassification_estimate,
    CausalEstimate, DrSign, EstimatorKind, OutcomeFit,
};
pub use glm::{fit_binary_glm, predict_scores, FitOptions, LinkKind, PropensityFit};
pub use matrix::Matrix;
pub use pipeline::{Pipeline, PipelineData, SchemeSpec};
pub use simulate::{
    generate, rate_study, run_monte_carlo, CellSpec, DesignKind, KRule, McConfig, McResult, OrSpec,
    PsSpec, RateConfig, RateResult, ScenarioConfig, SimDataset,
};
pub use subclass::{find_k_max, partition_by_rank, SubclassPartition};
pub use weights::{
    full_subclass_weights, implied_scores, ipw_weights, subclass_weights, trimmed_weights,
    UnitWeights, WeightScheme,
};
