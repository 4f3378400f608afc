//! Benchmark data generation and the Monte Carlo replication harness.
//!
//! The generator draws four independent standard-normal covariates per unit,
//! assigns treatment with probability `expit(X . gamma)` for the logit design
//! (`gamma = (-1, 0.5, -0.25, -0.1)`, no intercept in the true mechanism),
//! and produces the outcome `Y(z) = 210 + 27.4 X1 + 13.7 X2 + 13.7 X3 +
//! 13.7 X4 + eps` with standard-normal noise; the potential outcomes carry no
//! treatment term, so the true average causal effect is exactly zero. The
//! variant design swaps in the complementary log-log assignment mean
//! `1 - exp(-exp(X . gamma))` and the log-transformed outcome
//! `Y(z) = log(210 + 27.4 X1 + ...) + eps`, regenerating the rare unit whose
//! linear term is non-positive.
//!
//! Misspecification follows the usual device: models are fit on the
//! nonlinear images `W1 = exp(X1/2)`, `W2 = X2/(1+exp(X1)) + 10`,
//! `W3 = (X1 X3 / 25 + 0.6)^3`, `W4 = (X2 + X4 + 20)^2` instead of on `X`.
//!
//! All randomness is counter-based: the dataset for replication `r` is a pure
//! function of `(seed, r)`, every cell of a replication sees the identical
//! dataset (common random numbers), and aggregation is order-independent, so
//! results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::standardized_imbalance;
use crate::estimators::{
    doubly_robust_masked, fit_outcome_regression, hajek, horvitz_thompson,
    subclassification_estimate, DrSign, EstimatorKind, OutcomeFit,
};
use crate::glm::{fit_binary_glm, predict_scores, FitOptions, LinkKind};
use crate::matrix::Matrix;
use crate::pipeline::{scheme_weights_and_scores, SchemeSpec};
use crate::rng::CounterRng;
use crate::subclass::{find_k_max, partition_by_rank};
use crate::weights::{true_score_weights, UnitWeights};

/// Treatment-model coefficients of the benchmark designs.
pub const GAMMA: [f64; 4] = [-1.0, 0.5, -0.25, -0.1];

/// The generator's true average causal effect.
pub const TRUE_DELTA: f64 = 0.0;

/// Counter layout inside a replication stream: unit i, regeneration attempt
/// a, slot s map to counter `i * 512 + a * 8 + s`. Slots 0-3 are the
/// covariate normals, 4 the assignment uniform, 5 the outcome noise.
const UNIT_STRIDE: u64 = 512;
const ATTEMPT_STRIDE: u64 = 8;
const MAX_ATTEMPTS: u64 = 64;

/// Failures kept verbatim per cell before switching to counting only.
const FAILURE_LOG_CAP: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("non-positive log argument for {regenerated} draws, above the {limit} limit")]
    NonPositiveLogArgument { regenerated: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    KsLogit,
    CloglogVariant,
}

impl DesignKind {
    /// The link of the correctly specified propensity model for this design.
    pub fn fit_link(self) -> LinkKind {
        match self {
            DesignKind::KsLogit => LinkKind::Logit,
            DesignKind::CloglogVariant => LinkKind::Cloglog,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DesignKind::KsLogit => "ks_logit",
            DesignKind::CloglogVariant => "cloglog_variant",
        }
    }
}

/// Whether the propensity model is fit on `X` (correct) or `W` (incorrect).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsSpec {
    Correct,
    Incorrect,
}

impl PsSpec {
    pub fn label(self) -> &'static str {
        match self {
            PsSpec::Correct => "correct",
            PsSpec::Incorrect => "incorrect",
        }
    }
}

/// Outcome-regression specification for the doubly robust estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrSpec {
    Correct,
    Incorrect,
    None,
}

impl OrSpec {
    pub fn label(self) -> &'static str {
        match self {
            OrSpec::Correct => "correct",
            OrSpec::Incorrect => "incorrect",
            OrSpec::None => "none",
        }
    }
}

/// One scenario draw: the dataset for `(seed, replication_index)` is
/// bit-reproducible and shared by every model specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub design: DesignKind,
    pub ps_spec: PsSpec,
    pub or_spec: OrSpec,
    pub seed: u64,
    pub replication_index: u64,
}

/// A generated dataset with simulation truth attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub x: Matrix,
    pub w: Matrix,
    pub z: Vec<u8>,
    pub y: Vec<f64>,
    pub true_scores: Vec<f64>,
    pub true_delta: f64,
}

pub(crate) fn linear_term(x: &[f64]) -> f64 {
    210.0 + 27.4 * x[0] + 13.7 * x[1] + 13.7 * x[2] + 13.7 * x[3]
}

pub(crate) fn true_score(design: DesignKind, x: &[f64]) -> f64 {
    let mut eta = 0.0;
    for j in 0..4 {
        eta += x[j] * GAMMA[j];
    }
    design.fit_link().mean(eta)
}

fn w_transform(x: &[f64]) -> [f64; 4] {
    [
        (x[0] / 2.0).exp(),
        x[1] / (1.0 + x[0].exp()) + 10.0,
        (x[0] * x[2] / 25.0 + 0.6).powi(3),
        (x[1] + x[3] + 20.0).powi(2),
    ]
}

/// Generates one replication dataset, deterministically in
/// `(seed, replication_index)`.
pub fn generate(config: &ScenarioConfig) -> Result<SimDataset, SimError> {
    if config.n < 20 {
        return Err(SimError::InvalidConfig(format!(
            "n = {} is below 20",
            config.n
        )));
    }
    let stream = CounterRng::new(config.seed).derive(config.replication_index);
    let n = config.n;
    let mut x = Matrix::zeros(n, 4);
    let mut w = Matrix::zeros(n, 4);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut true_scores = Vec::with_capacity(n);
    let limit = (0.001 * n as f64).floor() as usize;
    let mut regenerated = 0usize;
    for i in 0..n {
        let mut filled = false;
        for attempt in 0..MAX_ATTEMPTS {
            let base = i as u64 * UNIT_STRIDE + attempt * ATTEMPT_STRIDE;
            let xi = [
                stream.normal(base),
                stream.normal(base + 1),
                stream.normal(base + 2),
                stream.normal(base + 3),
            ];
            let lin = linear_term(&xi);
            if config.design == DesignKind::CloglogVariant && lin <= 0.0 {
                regenerated += 1;
                if regenerated > limit {
                    return Err(SimError::NonPositiveLogArgument { regenerated, limit });
                }
                continue;
            }
            let score = true_score(config.design, &xi);
            let zi = u8::from(stream.uniform(base + 4) < score);
            let eps = stream.normal(base + 5);
            let yi = match config.design {
                DesignKind::KsLogit => lin + eps,
                DesignKind::CloglogVariant => lin.ln() + eps,
            };
            let wi = w_transform(&xi);
            for j in 0..4 {
                x.set(i, j, xi[j]);
                w.set(i, j, wi[j]);
            }
            z.push(zi);
            y.push(yi);
            true_scores.push(score);
            filled = true;
            break;
        }
        if !filled {
            return Err(SimError::NonPositiveLogArgument {
                regenerated,
                limit: limit.max(1),
            });
        }
    }
    Ok(SimDataset {
        x,
        w,
        z,
        y,
        true_scores,
        true_delta: TRUE_DELTA,
    })
}

/// One cell of the Monte Carlo grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub design: DesignKind,
    pub n: usize,
    pub ps_spec: PsSpec,
    pub or_spec: OrSpec,
    pub estimator: EstimatorKind,
    pub scheme: SchemeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub cells: Vec<CellSpec>,
    pub replications: usize,
    pub seed: u64,
    pub fit_options: FitOptions,
    pub dr_sign: DrSign,
}

/// Aggregated results for one cell, plus the per-replication raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCellResult {
    pub spec: CellSpec,
    /// Mean of the estimates over successful replications (the true effect
    /// is zero, so this is the bias). `None` when every replication failed.
    pub bias: Option<f64>,
    /// `sqrt(mean(delta^2))` over successful replications.
    pub rmse: Option<f64>,
    pub imb_mean: Option<f64>,
    pub imb_median: Option<f64>,
    pub n_success: usize,
    pub n_failures: usize,
    /// First few failures, as `(replication_index, message)`.
    pub failure_log: Vec<(usize, String)>,
    /// Per-replication estimates (`None` marks a failed replication).
    pub estimates: Vec<Option<f64>>,
    /// Per-replication standardized imbalance of the cell's weights.
    pub imbalances: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub cells: Vec<McCellResult>,
    pub replications: usize,
    pub seed: u64,
}

struct RepCellOutcome {
    estimate: Result<f64, String>,
    imbalance: Option<f64>,
}

/// Runs the replication grid. Within one replication every cell sees the
/// identical dataset; per-replication failures become counted NA cells.
pub fn run_monte_carlo(config: &McConfig) -> Result<McResult, SimError> {
    validate_cells(config)?;
    let datasets = dataset_groups(&config.cells);
    let cell_dataset: Vec<usize> = config
        .cells
        .iter()
        .map(|c| datasets.iter().position(|&d| d == (c.design, c.n)).unwrap())
        .collect();

    let reps: Vec<Vec<RepCellOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| evaluate_replication(config, &datasets, &cell_dataset, rep))
        .collect();

    let mut cells = Vec::with_capacity(config.cells.len());
    for (idx, spec) in config.cells.iter().enumerate() {
        let mut estimates = Vec::with_capacity(config.replications);
        let mut imbalances = Vec::with_capacity(config.replications);
        let mut failure_log = Vec::new();
        let mut n_failures = 0;
        for (rep, outcomes) in reps.iter().enumerate() {
            let outcome = &outcomes[idx];
            match &outcome.estimate {
                Ok(v) => estimates.push(Some(*v)),
                Err(msg) => {
                    estimates.push(None);
                    n_failures += 1;
                    if failure_log.len() < FAILURE_LOG_CAP {
                        failure_log.push((rep, msg.clone()));
                    }
                }
            }
            imbalances.push(outcome.imbalance);
        }
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let n_success = ok.len();
        let (bias, rmse) = if ok.is_empty() {
            (None, None)
        } else {
            let m = ok.iter().sum::<f64>() / n_success as f64;
            let msq = ok.iter().map(|v| v * v).sum::<f64>() / n_success as f64;
            (Some(m - TRUE_DELTA), Some(msq.sqrt()))
        };
        let mut imb_ok: Vec<f64> = imbalances.iter().flatten().copied().collect();
        let (imb_mean, imb_median) = if imb_ok.is_empty() {
            (None, None)
        } else {
            let mean = imb_ok.iter().sum::<f64>() / imb_ok.len() as f64;
            imb_ok.sort_by(|a, b| a.partial_cmp(b).expect("finite imbalance"));
            let median = crate::weights::nearest_rank_quantile(&imb_ok, 0.5);
            (Some(mean), Some(median))
        };
        cells.push(McCellResult {
            spec: *spec,
            bias,
            rmse,
            imb_mean,
            imb_median,
            n_success,
            n_failures,
            failure_log,
            estimates,
            imbalances,
        });
    }
    Ok(McResult {
        cells,
        replications: config.replications,
        seed: config.seed,
    })
}

fn validate_cells(config: &McConfig) -> Result<(), SimError> {
    if config.replications == 0 {
        return Err(SimError::InvalidConfig("replications must be >= 1".into()));
    }
    for cell in &config.cells {
        match cell.estimator {
            EstimatorKind::HorvitzThompson | EstimatorKind::Hajek => {
                if cell.or_spec != OrSpec::None {
                    return Err(SimError::InvalidConfig(format!(
                        "{} does not use an outcome regression",
                        cell.estimator.label()
                    )));
                }
            }
            EstimatorKind::DoublyRobust => {
                if cell.or_spec == OrSpec::None {
                    return Err(SimError::InvalidConfig(
                        "dr requires an outcome-regression specification".into(),
                    ));
                }
            }
            other => {
                return Err(SimError::InvalidConfig(format!(
                    "estimator {} is not part of the Monte Carlo grid (use scheme subclass:k with ht)",
                    other.label()
                )));
            }
        }
        match cell.scheme {
            SchemeSpec::Subclass { k } if k == 0 => {
                return Err(SimError::InvalidConfig(
                    "subclass scheme needs k >= 1".into(),
                ));
            }
            SchemeSpec::Trimmed { quantile } if !(quantile > 0.0 && quantile < 1.0) => {
                return Err(SimError::InvalidConfig(format!(
                    "trim quantile {quantile} outside (0,1)"
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

fn dataset_groups(cells: &[CellSpec]) -> Vec<(DesignKind, usize)> {
    let mut groups = Vec::new();
    for cell in cells {
        if !groups.contains(&(cell.design, cell.n)) {
            groups.push((cell.design, cell.n));
        }
    }
    groups
}

/// Weights plus the scores an estimator pairs with them, or the stage error.
type BuiltWeights = Result<(UnitWeights, Vec<f64>), String>;

/// Per-dataset model artifacts computed at most once per replication.
struct DatasetArtifacts {
    data: SimDataset,
    scores: [Option<Result<Vec<f64>, String>>; 2],
    outcome_fits: [Option<Result<OutcomeFit, String>>; 2],
    weights: Vec<((PsSpec, SchemeSpec), BuiltWeights)>,
}

impl DatasetArtifacts {
    fn scores(
        &mut self,
        design: DesignKind,
        ps: PsSpec,
        fit_options: &FitOptions,
    ) -> Result<Vec<f64>, String> {
        let slot = ps_index(ps);
        if self.scores[slot].is_none() {
            let covariates = match ps {
                PsSpec::Correct => &self.data.x,
                PsSpec::Incorrect => &self.data.w,
            };
            let result = fit_binary_glm(covariates, &self.data.z, design.fit_link(), fit_options)
                .and_then(|fit| predict_scores(&fit, covariates))
                .map_err(|e| format!("ps fit ({}): {e}", ps.label()));
            self.scores[slot] = Some(result);
        }
        self.scores[slot].as_ref().unwrap().clone()
    }

    fn outcome_fit(&mut self, or: OrSpec) -> Result<OutcomeFit, String> {
        let slot = match or {
            OrSpec::Correct => 0,
            OrSpec::Incorrect => 1,
            OrSpec::None => unreachable!("validated"),
        };
        if self.outcome_fits[slot].is_none() {
            let covariates = match or {
                OrSpec::Correct => &self.data.x,
                OrSpec::Incorrect => &self.data.w,
                OrSpec::None => unreachable!(),
            };
            let result = fit_outcome_regression(covariates, &self.data.y, &self.data.z)
                .map_err(|e| format!("outcome regression ({}): {e}", or.label()));
            self.outcome_fits[slot] = Some(result);
        }
        self.outcome_fits[slot].as_ref().unwrap().clone()
    }

    fn weights(
        &mut self,
        design: DesignKind,
        ps: PsSpec,
        scheme: SchemeSpec,
        fit_options: &FitOptions,
    ) -> BuiltWeights {
        if let Some((_, cached)) = self.weights.iter().find(|(key, _)| *key == (ps, scheme)) {
            return cached.clone();
        }
        let built = match scheme {
            SchemeSpec::TrueScores => true_score_weights(&self.data.true_scores, &self.data.z)
                .map(|w| (w, self.data.true_scores.clone()))
                .map_err(|e| format!("true weights: {e}")),
            _ => self.scores(design, ps, fit_options).and_then(|scores| {
                scheme_weights_and_scores(&scheme, &scores, design.fit_link(), &self.data.z)
                    .map_err(|e| format!("{} weights: {e}", scheme.label()))
            }),
        };
        self.weights.push(((ps, scheme), built.clone()));
        built
    }
}

fn ps_index(ps: PsSpec) -> usize {
    match ps {
        PsSpec::Correct => 0,
        PsSpec::Incorrect => 1,
    }
}

fn evaluate_replication(
    config: &McConfig,
    datasets: &[(DesignKind, usize)],
    cell_dataset: &[usize],
    rep: usize,
) -> Vec<RepCellOutcome> {
    let mut artifacts: Vec<Result<DatasetArtifacts, String>> = datasets
        .iter()
        .map(|&(design, n)| {
            generate(&ScenarioConfig {
                n,
                design,
                ps_spec: PsSpec::Correct,
                or_spec: OrSpec::None,
                seed: config.seed,
                replication_index: rep as u64,
            })
            .map(|data| DatasetArtifacts {
                data,
                scores: [None, None],
                outcome_fits: [None, None],
                weights: Vec::new(),
            })
            .map_err(|e| format!("generate: {e}"))
        })
        .collect();

    config
        .cells
        .iter()
        .enumerate()
        .map(|(idx, cell)| {
            let artifact = match &mut artifacts[cell_dataset[idx]] {
                Ok(a) => a,
                Err(msg) => {
                    return RepCellOutcome {
                        estimate: Err(msg.clone()),
                        imbalance: None,
                    }
                }
            };
            evaluate_cell(config, cell, artifact)
        })
        .collect()
}

fn evaluate_cell(
    config: &McConfig,
    cell: &CellSpec,
    artifact: &mut DatasetArtifacts,
) -> RepCellOutcome {
    let built = artifact.weights(cell.design, cell.ps_spec, cell.scheme, &config.fit_options);
    let (weights, dr_scores) = match built {
        Ok(pair) => pair,
        Err(msg) => {
            return RepCellOutcome {
                estimate: Err(msg),
                imbalance: None,
            }
        }
    };
    // Balance is assessed on the covariates entering the model: X for the
    // correct specification and the truth, W for the misspecified one.
    let balance_covariates = match (cell.scheme, cell.ps_spec) {
        (SchemeSpec::TrueScores, _) | (_, PsSpec::Correct) => &artifact.data.x,
        (_, PsSpec::Incorrect) => &artifact.data.w,
    };
    let imbalance = standardized_imbalance(balance_covariates, &artifact.data.z, &weights).ok();
    let estimate = match cell.estimator {
        EstimatorKind::HorvitzThompson => {
            horvitz_thompson(&artifact.data.y, &artifact.data.z, &weights)
                .map(|e| e.delta)
                .map_err(|e| format!("ht: {e}"))
        }
        EstimatorKind::Hajek => hajek(&artifact.data.y, &artifact.data.z, &weights)
            .map(|e| e.delta)
            .map_err(|e| format!("hajek: {e}")),
        EstimatorKind::DoublyRobust => artifact.outcome_fit(cell.or_spec).and_then(|fit| {
            let covariates = match cell.or_spec {
                OrSpec::Correct => &artifact.data.x,
                OrSpec::Incorrect => &artifact.data.w,
                OrSpec::None => unreachable!("validated"),
            };
            doubly_robust_masked(
                &artifact.data.y,
                &artifact.data.z,
                &dr_scores,
                &fit,
                covariates,
                &weights.included,
                config.dr_sign,
            )
            .map(|e| e.delta)
            .map_err(|e| format!("dr: {e}"))
        }),
        _ => unreachable!("validated"),
    };
    RepCellOutcome {
        estimate,
        imbalance,
    }
}

/// Rule for the number of subclasses as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum KRule {
    Fixed {
        k: usize,
    },
    /// `K = ceil(N^exponent)`.
    Power {
        exponent: f64,
    },
    /// `K = floor(N / (ln N)^2)`.
    NLogSq,
    KMax,
}

impl KRule {
    /// Nominal class count at sample size `n` (always clamped to `1..=n`).
    pub fn nominal_k(&self, n: usize) -> usize {
        let k = match self {
            KRule::Fixed { k } => *k,
            KRule::Power { exponent } => (n as f64).powf(*exponent).ceil() as usize,
            KRule::NLogSq => {
                let ln = (n as f64).ln();
                (n as f64 / (ln * ln)).floor() as usize
            }
            KRule::KMax => n,
        };
        k.clamp(1, n)
    }

    pub fn label(&self) -> String {
        match self {
            KRule::Fixed { k } => format!("fixed:{k}"),
            KRule::Power { exponent } => format!("power:{exponent}"),
            KRule::NLogSq => "nlog2".to_string(),
            KRule::KMax => "k_max".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub n_grid: Vec<usize>,
    pub k_rule: KRule,
    pub replications: usize,
    pub seed: u64,
    pub design: DesignKind,
    pub ps_spec: PsSpec,
    pub fit_options: FitOptions,
}

/// Per-sample-size outcome of the rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub k_nominal: usize,
    /// Mean realized class count over non-failed replications.
    pub k_mean: Option<f64>,
    /// Fraction of non-failed replications with a feasible partition.
    pub feasible_fraction: f64,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub n_feasible: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub points: Vec<RatePoint>,
    /// OLS slope of `ln(rmse)` on `ln(n)`; `None` with fewer than two
    /// defined points.
    pub log_rmse_slope: Option<f64>,
}

enum RateOutcome {
    Feasible { k: usize, delta: f64 },
    Infeasible { k: usize },
    Failed(String),
}

/// Runs the subclass-count rate study: per sample size, the feasibility
/// fraction of the rule's partition and the bias/RMSE of the resulting
/// subclassification estimates, plus the fitted log-log RMSE slope.
pub fn rate_study(config: &RateConfig) -> Result<RateResult, SimError> {
    if config.n_grid.is_empty() {
        return Err(SimError::InvalidConfig("n_grid must be nonempty".into()));
    }
    if config.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidConfig(
            "n_grid must be strictly increasing".into(),
        ));
    }
    if config.replications == 0 {
        return Err(SimError::InvalidConfig("replications must be >= 1".into()));
    }
    let mut points = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let outcomes: Vec<RateOutcome> = (0..config.replications)
            .into_par_iter()
            .map(|rep| rate_replication(config, n, rep))
            .collect();
        let mut deltas = Vec::new();
        let mut ks = Vec::new();
        let mut n_infeasible = 0usize;
        let mut n_failures = 0usize;
        for outcome in &outcomes {
            match outcome {
                RateOutcome::Feasible { k, delta } => {
                    deltas.push(*delta);
                    ks.push(*k as f64);
                }
                RateOutcome::Infeasible { k } => {
                    n_infeasible += 1;
                    ks.push(*k as f64);
                }
                RateOutcome::Failed(msg) => {
                    n_failures += 1;
                    log::debug!("rate study failure at n = {n}: {msg}");
                }
            }
        }
        let n_feasible = deltas.len();
        let evaluated = n_feasible + n_infeasible;
        let feasible_fraction = if evaluated == 0 {
            0.0
        } else {
            n_feasible as f64 / evaluated as f64
        };
        let (bias, rmse) = if deltas.is_empty() {
            (None, None)
        } else {
            let m = deltas.iter().sum::<f64>() / n_feasible as f64;
            let msq = deltas.iter().map(|v| v * v).sum::<f64>() / n_feasible as f64;
            (Some(m - TRUE_DELTA), Some(msq.sqrt()))
        };
        let k_mean = if ks.is_empty() {
            None
        } else {
            Some(ks.iter().sum::<f64>() / ks.len() as f64)
        };
        points.push(RatePoint {
            n,
            k_nominal: config.k_rule.nominal_k(n),
            k_mean,
            feasible_fraction,
            bias,
            rmse,
            n_feasible,
            n_failures,
        });
    }
    let defined: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.rmse.map(|r| ((p.n as f64).ln(), r.ln())))
        .collect();
    let log_rmse_slope = ols_slope(&defined);
    Ok(RateResult {
        points,
        log_rmse_slope,
    })
}

fn rate_replication(config: &RateConfig, n: usize, rep: usize) -> RateOutcome {
    let data = match generate(&ScenarioConfig {
        n,
        design: config.design,
        ps_spec: config.ps_spec,
        or_spec: OrSpec::None,
        seed: config.seed,
        replication_index: rep as u64,
    }) {
        Ok(d) => d,
        Err(e) => return RateOutcome::Failed(format!("generate: {e}")),
    };
    let covariates = match config.ps_spec {
        PsSpec::Correct => &data.x,
        PsSpec::Incorrect => &data.w,
    };
    let scores = match fit_binary_glm(
        covariates,
        &data.z,
        config.design.fit_link(),
        &config.fit_options,
    )
    .and_then(|fit| predict_scores(&fit, covariates))
    {
        Ok(s) => s,
        Err(e) => return RateOutcome::Failed(format!("ps fit: {e}")),
    };
    match config.k_rule {
        KRule::KMax => match find_k_max(&scores, &data.z) {
            Ok((k, partition)) => match subclassification_estimate(&data.y, &data.z, &partition) {
                Ok(est) => RateOutcome::Feasible {
                    k,
                    delta: est.delta,
                },
                Err(e) => RateOutcome::Failed(format!("estimate: {e}")),
            },
            Err(e) => RateOutcome::Failed(format!("k_max: {e}")),
        },
        rule => {
            let k = rule.nominal_k(n);
            match partition_by_rank(&scores, &data.z, k) {
                Ok(partition) if partition.is_feasible() => {
                    match subclassification_estimate(&data.y, &data.z, &partition) {
                        Ok(est) => RateOutcome::Feasible {
                            k,
                            delta: est.delta,
                        },
                        Err(e) => RateOutcome::Failed(format!("estimate: {e}")),
                    }
                }
                Ok(_) => RateOutcome::Infeasible { k },
                Err(e) => RateOutcome::Failed(format!("partition: {e}")),
            }
        }
    }
}

fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(n: usize, design: DesignKind, seed: u64, rep: u64) -> ScenarioConfig {
        ScenarioConfig {
            n,
            design,
            ps_spec: PsSpec::Correct,
            or_spec: OrSpec::None,
            seed,
            replication_index: rep,
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let cfg = scenario(200, DesignKind::KsLogit, 9, 4);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&scenario(200, DesignKind::KsLogit, 9, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn true_score_at_origin_is_half_for_logit() {
        assert_eq!(true_score(DesignKind::KsLogit, &[0.0; 4]), 0.5);
    }

    #[test]
    fn outcome_mean_at_origin() {
        assert_eq!(linear_term(&[0.0; 4]), 210.0);
        // Variant outcome at the origin is log(210) plus noise; the
        // potential outcomes carry no treatment term.
        assert!((210.0f64.ln() - 5.347_107).abs() < 1e-6);
    }

    #[test]
    fn w_transform_spot_values() {
        let x = [1.0, -0.5, 2.0, 0.25];
        let w = w_transform(&x);
        assert!((w[0] - 0.5f64.exp()).abs() < 1e-15);
        assert!((w[1] - (-0.5 / (1.0 + 1.0f64.exp()) + 10.0)).abs() < 1e-15);
        assert!((w[2] - (1.0 * 2.0 / 25.0 + 0.6f64).powi(3)).abs() < 1e-15);
        assert!((w[3] - (19.75f64).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn generator_moments_and_score_range() {
        let data = generate(&scenario(100_000, DesignKind::KsLogit, 31, 0)).unwrap();
        let n = data.z.len() as f64;
        let tol = 4.0 / n.sqrt();
        for j in 0..4 {
            let mean: f64 = (0..data.x.nrows()).map(|i| data.x.get(i, j)).sum::<f64>() / n;
            let var: f64 = (0..data.x.nrows())
                .map(|i| data.x.get(i, j).powi(2))
                .sum::<f64>()
                / n
                - mean * mean;
            assert!(mean.abs() < tol, "column {j} mean {mean}");
            assert!((var - 1.0).abs() < tol, "column {j} variance {var}");
        }
        assert!(data.true_scores.iter().all(|&s| s > 0.0 && s < 1.0));
        // The logit design has no intercept, so the treated fraction sits
        // near one half; check stability across seeds within MC error.
        let frac =
            |d: &SimDataset| d.z.iter().map(|&z| f64::from(z)).sum::<f64>() / d.z.len() as f64;
        let f1 = frac(&data);
        let f2 = frac(&generate(&scenario(100_000, DesignKind::KsLogit, 77, 0)).unwrap());
        assert!((f1 - f2).abs() < 6.0 * (0.25f64 / n).sqrt() * 2.0f64.sqrt());
    }

    #[test]
    fn variant_design_uses_log_outcome() {
        let data = generate(&scenario(5_000, DesignKind::CloglogVariant, 11, 2)).unwrap();
        let mean_y: f64 = data.y.iter().sum::<f64>() / data.y.len() as f64;
        // E[log(linear term)] is a bit below log(210) by Jensen; the sample
        // mean should sit near 5.3.
        assert!((mean_y - 5.3).abs() < 0.1, "mean {mean_y}");
        // Cloglog truth is asymmetric: treated fraction well above one half.
        let frac = data.z.iter().map(|&z| f64::from(z)).sum::<f64>() / data.z.len() as f64;
        assert!(frac > 0.55, "treated fraction {frac}");
    }

    #[test]
    fn small_n_is_rejected() {
        let err = generate(&scenario(10, DesignKind::KsLogit, 1, 0)).unwrap_err();
        assert!(matches!(err, SimError::InvalidConfig(_)));
    }

    fn tiny_grid(seed: u64) -> McConfig {
        McConfig {
            cells: vec![
                CellSpec {
                    design: DesignKind::KsLogit,
                    n: 100,
                    ps_spec: PsSpec::Correct,
                    or_spec: OrSpec::None,
                    estimator: EstimatorKind::Hajek,
                    scheme: SchemeSpec::Ipw,
                },
                CellSpec {
                    design: DesignKind::KsLogit,
                    n: 100,
                    ps_spec: PsSpec::Correct,
                    or_spec: OrSpec::None,
                    estimator: EstimatorKind::HorvitzThompson,
                    scheme: SchemeSpec::FullSubclass,
                },
            ],
            replications: 5,
            seed,
            fit_options: FitOptions::default(),
            dr_sign: DrSign::Standard,
        }
    }

    #[test]
    fn single_replication_bias_is_the_estimate() {
        let mut cfg = tiny_grid(5);
        cfg.replications = 1;
        let result = run_monte_carlo(&cfg).unwrap();
        for cell in &result.cells {
            let est = cell.estimates[0].unwrap();
            assert_eq!(cell.bias, Some(est));
            assert_eq!(cell.rmse, Some(est.abs()));
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_order_independent() {
        let a = run_monte_carlo(&tiny_grid(12)).unwrap();
        let b = run_monte_carlo(&tiny_grid(12)).unwrap();
        assert_eq!(a, b);
        // Reversing the cell order must not change any per-cell numbers.
        let mut cfg = tiny_grid(12);
        cfg.cells.reverse();
        let c = run_monte_carlo(&cfg).unwrap();
        assert_eq!(a.cells[0].estimates, c.cells[1].estimates);
        assert_eq!(a.cells[1].estimates, c.cells[0].estimates);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = tiny_grid(3);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_monte_carlo(&cfg).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_monte_carlo(&cfg).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn dr_cells_require_or_spec() {
        let mut cfg = tiny_grid(4);
        cfg.cells[0].estimator = EstimatorKind::DoublyRobust;
        assert!(matches!(
            run_monte_carlo(&cfg),
            Err(SimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn rate_study_single_point_has_no_slope() {
        let cfg = RateConfig {
            n_grid: vec![100],
            k_rule: KRule::Fixed { k: 5 },
            replications: 3,
            seed: 2,
            design: DesignKind::KsLogit,
            ps_spec: PsSpec::Correct,
            fit_options: FitOptions::default(),
        };
        let result = rate_study(&cfg).unwrap();
        assert_eq!(result.points.len(), 1);
        assert!(result.log_rmse_slope.is_none());
    }

    #[test]
    fn singleton_classes_are_never_feasible() {
        let cfg = RateConfig {
            n_grid: vec![50, 100],
            k_rule: KRule::Power { exponent: 1.0 },
            replications: 4,
            seed: 8,
            design: DesignKind::KsLogit,
            ps_spec: PsSpec::Correct,
            fit_options: FitOptions::default(),
        };
        let result = rate_study(&cfg).unwrap();
        for point in &result.points {
            assert_eq!(point.feasible_fraction, 0.0, "n = {}", point.n);
            assert!(point.rmse.is_none());
        }
    }

    #[test]
    fn nlog2_rule_values() {
        assert_eq!(KRule::NLogSq.nominal_k(200), 7);
        assert_eq!(KRule::NLogSq.nominal_k(1000), 20);
        assert_eq!(KRule::NLogSq.nominal_k(5000), 68);
    }
}
