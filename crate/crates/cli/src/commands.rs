//! The five subcommands: simulate, analyze, weights, diagnose, rate-study.

use std::path::Path;

use serde::Serialize;

use fullsub::balance::balance_report;
use fullsub::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapError};
use fullsub::estimators::EstimatorKind;
use fullsub::glm::{fit_binary_glm, predict_scores, LinkKind};
use fullsub::matrix::Matrix;
use fullsub::pipeline::{
    scheme_weights_and_scores, Pipeline, PipelineData, PipelineError, SchemeSpec,
};
use fullsub::simulate::{
    rate_study, run_monte_carlo, CellSpec, McConfig, OrSpec, RateConfig, SimError,
};
use fullsub::weights::{implied_scores, UnitWeights};

use crate::config::{
    fit_options, parse_design, parse_dr_sign, parse_estimator, parse_k_rule, parse_link,
    parse_or_spec, parse_ps_spec, parse_scheme, AnalyzeConfig, RateStudyConfig, SimulateConfig,
};
use crate::data::CsvTable;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, OutputDir};

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig(msg) => CliError::Config(msg),
        other => CliError::Numeric(other.to_string()),
    }
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::UnsupportedScheme(s) => {
            CliError::Config(format!("scheme '{s}' needs simulation truth"))
        }
        PipelineError::UnsupportedEstimator(s) => {
            CliError::Config(format!("estimator '{s}' is not available here"))
        }
        other => CliError::Numeric(other.to_string()),
    }
}

fn bootstrap_error(e: BootstrapError) -> CliError {
    match e {
        BootstrapError::InvalidReplicates(_) | BootstrapError::InvalidLevel(_) => {
            CliError::Config(e.to_string())
        }
        BootstrapError::Pipeline(inner) => pipeline_error(inner),
        other => CliError::Numeric(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateRow {
    n: usize,
    design: String,
    ps_spec: String,
    or_spec: String,
    estimator: String,
    scheme: String,
    bias: Option<f64>,
    rmse: Option<f64>,
    imb_mean: Option<f64>,
    imb_median: Option<f64>,
    n_failures: usize,
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    replications: usize,
    cells: Vec<SimulateRow>,
}

pub fn cmd_simulate(config: &SimulateConfig, out: &OutputDir, seed: Option<u64>) -> CliResult<()> {
    let designs = config
        .designs
        .clone()
        .unwrap_or_else(|| vec!["ks_logit".to_string()])
        .iter()
        .map(|s| parse_design(s))
        .collect::<CliResult<Vec<_>>>()?;
    let ps_specs = config
        .ps_specs
        .clone()
        .unwrap_or_else(|| vec!["correct".to_string()])
        .iter()
        .map(|s| parse_ps_spec(s))
        .collect::<CliResult<Vec<_>>>()?;
    let or_specs = config
        .or_specs
        .clone()
        .unwrap_or_else(|| vec!["correct".to_string()])
        .iter()
        .map(|s| parse_or_spec(s))
        .collect::<CliResult<Vec<_>>>()?;
    let estimators = config
        .estimators
        .iter()
        .map(|s| parse_estimator(s))
        .collect::<CliResult<Vec<_>>>()?;
    let schemes = config
        .schemes
        .iter()
        .map(|s| parse_scheme(s))
        .collect::<CliResult<Vec<_>>>()?;
    if config.n.is_empty() {
        return Err(CliError::Config(
            "n must list at least one sample size".into(),
        ));
    }

    let mut cells = Vec::new();
    for &design in &designs {
        for &n in &config.n {
            for &ps_spec in &ps_specs {
                for &scheme in &schemes {
                    for &estimator in &estimators {
                        if estimator == EstimatorKind::DoublyRobust {
                            for &or_spec in &or_specs {
                                cells.push(CellSpec {
                                    design,
                                    n,
                                    ps_spec,
                                    or_spec,
                                    estimator,
                                    scheme,
                                });
                            }
                        } else {
                            cells.push(CellSpec {
                                design,
                                n,
                                ps_spec,
                                or_spec: OrSpec::None,
                                estimator,
                                scheme,
                            });
                        }
                    }
                }
            }
        }
    }

    let mc = McConfig {
        cells,
        replications: config.replications,
        seed: seed.unwrap_or(config.seed),
        fit_options: fit_options(&config.glm),
        dr_sign: parse_dr_sign(&config.dr_sign)?,
    };
    let result = run_monte_carlo(&mc).map_err(sim_error)?;

    let rows: Vec<SimulateRow> = result
        .cells
        .iter()
        .map(|c| SimulateRow {
            n: c.spec.n,
            design: c.spec.design.label().to_string(),
            ps_spec: c.spec.ps_spec.label().to_string(),
            or_spec: c.spec.or_spec.label().to_string(),
            estimator: c.spec.estimator.label().to_string(),
            scheme: c.spec.scheme.label(),
            bias: c.bias,
            rmse: c.rmse,
            imb_mean: c.imb_mean,
            imb_median: c.imb_median,
            n_failures: c.n_failures,
        })
        .collect();

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.design,
                r.ps_spec,
                r.or_spec,
                r.estimator,
                r.scheme,
                fmt_opt(r.bias),
                fmt_opt(r.rmse),
                fmt_opt(r.imb_mean),
                fmt_opt(r.imb_median),
                r.n_failures
            )
        })
        .collect();
    out.write_csv(
        "results.csv",
        "n,design,ps_spec,or_spec,estimator,scheme,bias,rmse,imb_mean,imb_median,n_failures",
        &csv_rows,
    )?;

    // Series file for bias/RMSE-versus-N plots, sorted by series then N.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = (
            &rows[a].design,
            &rows[a].ps_spec,
            &rows[a].estimator,
            &rows[a].scheme,
            &rows[a].or_spec,
            rows[a].n,
        );
        let kb = (
            &rows[b].design,
            &rows[b].ps_spec,
            &rows[b].estimator,
            &rows[b].scheme,
            &rows[b].or_spec,
            rows[b].n,
        );
        ka.cmp(&kb)
    });
    let series_rows: Vec<String> = order
        .iter()
        .map(|&i| {
            let r = &rows[i];
            format!(
                "{},{},{},{},{},{},{},{}",
                r.design,
                r.ps_spec,
                r.or_spec,
                r.estimator,
                r.scheme,
                r.n,
                fmt_opt(r.bias),
                fmt_opt(r.rmse)
            )
        })
        .collect();
    out.write_csv(
        "figure_series.csv",
        "design,ps_spec,or_spec,estimator,scheme,n,bias,rmse",
        &series_rows,
    )?;

    out.write_json(
        "results.json",
        &SimulateReport {
            seed: mc.seed,
            replications: mc.replications,
            cells: rows,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze (plus shared loading for weights/diagnose)
// ---------------------------------------------------------------------------

struct AnalysisInput {
    data: PipelineData,
    balance_covariates: Matrix,
    link: LinkKind,
    schemes: Vec<SchemeSpec>,
    scheme_labels: Vec<String>,
    estimators: Vec<EstimatorKind>,
    fitted_scores: Vec<f64>,
    seed: u64,
}

fn load_analysis(config: &AnalyzeConfig, seed: Option<u64>) -> CliResult<AnalysisInput> {
    let table = CsvTable::load(&config.input)?;
    let treatment = table.treatment_column(&config.columns.treatment)?;
    let outcome = table.numeric_column(&config.columns.outcome)?;
    let or_covariates = table.covariate_matrix(&config.columns.covariates)?;
    let ps_names = config
        .columns
        .ps_covariates
        .as_ref()
        .unwrap_or(&config.columns.covariates);
    let ps_covariates = table.covariate_matrix(ps_names)?;
    let balance_names = config
        .columns
        .balance_covariates
        .as_ref()
        .unwrap_or(&config.columns.covariates);
    let balance_covariates = table.covariate_matrix(balance_names)?;
    let link = parse_link(config.ps_link.as_deref().unwrap_or("logit"))?;
    let schemes = config
        .schemes
        .iter()
        .map(|s| parse_scheme(s))
        .collect::<CliResult<Vec<_>>>()?;
    if schemes.contains(&SchemeSpec::TrueScores) {
        return Err(CliError::Config(
            "scheme 'true' needs simulation truth and is not available for CSV analysis".into(),
        ));
    }
    let estimators = config
        .estimators
        .iter()
        .map(|s| parse_estimator(s))
        .collect::<CliResult<Vec<_>>>()?;
    if schemes.is_empty() || estimators.is_empty() {
        return Err(CliError::Config(
            "schemes and estimators must be nonempty".into(),
        ));
    }

    let data = PipelineData {
        ps_covariates,
        or_covariates,
        outcome,
        treatment,
    };
    let fit = fit_binary_glm(
        &data.ps_covariates,
        &data.treatment,
        link,
        &fit_options(&config.glm),
    )
    .map_err(|e| CliError::Numeric(format!("propensity model: {e}")))?;
    let fitted_scores = predict_scores(&fit, &data.ps_covariates)
        .map_err(|e| CliError::Numeric(format!("propensity model: {e}")))?;
    Ok(AnalysisInput {
        data,
        balance_covariates,
        link,
        schemes,
        scheme_labels: config.schemes.clone(),
        estimators,
        fitted_scores,
        seed: seed.or(config.seed).unwrap_or(0),
    })
}

fn scheme_weights(input: &AnalysisInput, scheme: SchemeSpec) -> CliResult<(UnitWeights, Vec<f64>)> {
    scheme_weights_and_scores(
        &scheme,
        &input.fitted_scores,
        input.link,
        &input.data.treatment,
    )
    .map_err(pipeline_error)
}

#[derive(Serialize)]
struct AnalyzeRow {
    estimator: String,
    scheme: String,
    delta: f64,
    mu1: f64,
    mu0: f64,
    ratio: Option<f64>,
    imbalance: f64,
    se: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    pct_ci_low: Option<f64>,
    pct_ci_high: Option<f64>,
    b_successes: Option<usize>,
    b_failures: Option<usize>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    input: String,
    seed: u64,
    link: String,
    rows: Vec<AnalyzeRow>,
}

pub fn cmd_analyze(config: &AnalyzeConfig, out: &OutputDir, seed: Option<u64>) -> CliResult<()> {
    let input = load_analysis(config, seed)?;
    let dr_sign = parse_dr_sign(&config.dr_sign)?;
    let opts = fit_options(&config.glm);
    let bootstrap = match &config.bootstrap {
        Some(section) if section.enabled => Some(BootstrapConfig {
            replicates: section.b.unwrap_or(1000),
            level: section.level.unwrap_or(0.95),
            seed: input.seed,
        }),
        _ => None,
    };

    let mut rows = Vec::new();
    for (scheme, scheme_label) in input.schemes.iter().zip(&input.scheme_labels) {
        let (weights, _) = scheme_weights(&input, *scheme)?;
        let imbalance = fullsub::balance::standardized_imbalance(
            &input.balance_covariates,
            &input.data.treatment,
            &weights,
        )
        .map_err(|e| CliError::Numeric(e.to_string()))?;
        for &estimator in &input.estimators {
            let pipeline = Pipeline {
                link: input.link,
                scheme: *scheme,
                estimator,
                dr_sign,
                fit_options: opts,
            };
            let estimate = pipeline.run(&input.data).map_err(pipeline_error)?;
            let boot = match &bootstrap {
                // The same seed for every row: common resample indices
                // across estimators and schemes.
                Some(cfg) => {
                    Some(bootstrap_ci(&input.data, &pipeline, cfg).map_err(bootstrap_error)?)
                }
                None => None,
            };
            rows.push(AnalyzeRow {
                estimator: estimator.label().to_string(),
                scheme: scheme_label.clone(),
                delta: estimate.delta,
                mu1: estimate.mu1,
                mu0: estimate.mu0,
                ratio: estimate.ratio,
                imbalance,
                se: boot.as_ref().map(|b| b.se),
                ci_low: boot.as_ref().map(|b| b.ci_low),
                ci_high: boot.as_ref().map(|b| b.ci_high),
                pct_ci_low: boot.as_ref().map(|b| b.percentile_low),
                pct_ci_high: boot.as_ref().map(|b| b.percentile_high),
                b_successes: boot.as_ref().map(|b| b.successes),
                b_failures: boot.as_ref().map(|b| b.failures),
            });
        }
    }

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.estimator,
                r.scheme,
                fmt_f64(r.delta),
                fmt_f64(r.mu1),
                fmt_f64(r.mu0),
                fmt_opt(r.ratio),
                fmt_f64(r.imbalance),
                fmt_opt(r.se),
                fmt_opt(r.ci_low),
                fmt_opt(r.ci_high),
                fmt_opt(r.pct_ci_low),
                fmt_opt(r.pct_ci_high),
                r.b_successes.map_or("NA".to_string(), |v| v.to_string()),
                r.b_failures.map_or("NA".to_string(), |v| v.to_string()),
            )
        })
        .collect();
    out.write_csv(
        "estimates.csv",
        "estimator,scheme,delta,mu1,mu0,ratio,imbalance,se,ci_low,ci_high,pct_ci_low,pct_ci_high,b_successes,b_failures",
        &csv_rows,
    )?;
    out.write_json(
        "estimates.json",
        &AnalyzeReport {
            input: config.input.display().to_string(),
            seed: input.seed,
            link: input.link.label().to_string(),
            rows,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// weights
// ---------------------------------------------------------------------------

pub fn cmd_weights(config: &AnalyzeConfig, out: &OutputDir, seed: Option<u64>) -> CliResult<()> {
    let input = load_analysis(config, seed)?;
    let mut rows = Vec::new();
    for (scheme, scheme_label) in input.schemes.iter().zip(&input.scheme_labels) {
        let (weights, _) = scheme_weights(&input, *scheme)?;
        // The score column reports the scheme's own score: the fitted score
        // for inverse weighting, the coarsened implied score for
        // subclassification.
        let scores = match scheme {
            SchemeSpec::Subclass { .. } | SchemeSpec::FullSubclass => {
                implied_scores(&weights, &input.data.treatment)
                    .map_err(|e| CliError::Numeric(e.to_string()))?
            }
            _ => input.fitted_scores.clone(),
        };
        for i in 0..weights.n() {
            rows.push(format!(
                "{},{},{},{},{},{}",
                i,
                input.data.treatment[i],
                fmt_f64(scores[i]),
                fmt_f64(weights.w[i]),
                weights.included[i],
                scheme_label
            ));
        }
    }
    out.write_csv(
        "weights.csv",
        "unit_id,treatment,score,weight,included,scheme",
        &rows,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DiagnoseEntry {
    scheme: String,
    report: fullsub::balance::BalanceReport,
    covariates: Vec<String>,
}

pub fn cmd_diagnose(config: &AnalyzeConfig, out: &OutputDir, seed: Option<u64>) -> CliResult<()> {
    let input = load_analysis(config, seed)?;
    let delta = config.positivity_delta.unwrap_or(0.01);
    let covariate_names = config
        .columns
        .balance_covariates
        .clone()
        .unwrap_or_else(|| config.columns.covariates.clone());
    let mut entries = Vec::new();
    let mut csv_rows = Vec::new();
    for (scheme, scheme_label) in input.schemes.iter().zip(&input.scheme_labels) {
        let (weights, scheme_scores) = scheme_weights(&input, *scheme)?;
        let report = balance_report(
            &input.balance_covariates,
            &input.data.treatment,
            &weights,
            &scheme_scores,
            delta,
        )
        .map_err(|e| CliError::Numeric(e.to_string()))?;
        for (name, diff) in covariate_names
            .iter()
            .zip(&report.per_covariate_weighted_diff)
        {
            csv_rows.push(format!("{scheme_label},{name},{}", fmt_f64(*diff)));
        }
        entries.push(DiagnoseEntry {
            scheme: scheme_label.clone(),
            report,
            covariates: covariate_names.clone(),
        });
    }
    out.write_csv("balance.csv", "scheme,covariate,weighted_diff", &csv_rows)?;
    out.write_json("balance.json", &entries)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rate-study
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RateReport {
    k_rule: String,
    seed: u64,
    replications: usize,
    points: Vec<fullsub::simulate::RatePoint>,
    log_rmse_slope: Option<f64>,
}

pub fn cmd_rate_study(
    config: &RateStudyConfig,
    out: &OutputDir,
    seed: Option<u64>,
) -> CliResult<()> {
    let k_rule = parse_k_rule(&config.k_rule)?;
    let rate_config = RateConfig {
        n_grid: config.n_grid.clone(),
        k_rule,
        replications: config.replications,
        seed: seed.unwrap_or(config.seed),
        design: parse_design(config.design.as_deref().unwrap_or("ks_logit"))?,
        ps_spec: parse_ps_spec(config.ps_spec.as_deref().unwrap_or("correct"))?,
        fit_options: fit_options(&config.glm),
    };
    let result = rate_study(&rate_config).map_err(sim_error)?;
    let rows: Vec<String> = result
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                p.n,
                k_rule.label(),
                p.k_nominal,
                fmt_opt(p.k_mean),
                fmt_f64(p.feasible_fraction),
                fmt_opt(p.bias),
                fmt_opt(p.rmse),
                p.n_feasible,
                p.n_failures
            )
        })
        .collect();
    out.write_csv(
        "rate_study.csv",
        "n,k_rule,k_nominal,k_mean,feasible_fraction,bias,rmse,n_feasible,n_failures",
        &rows,
    )?;
    out.write_json(
        "rate_study.json",
        &RateReport {
            k_rule: k_rule.label(),
            seed: rate_config.seed,
            replications: rate_config.replications,
            points: result.points,
            log_rmse_slope: result.log_rmse_slope,
        },
    )?;
    Ok(())
}

/// Resolves the output directory: the `--out` flag wins, then the config's
/// `out` field, then the current directory.
pub fn resolve_out(
    flag: &Option<std::path::PathBuf>,
    config_out: &Option<std::path::PathBuf>,
) -> CliResult<OutputDir> {
    let root = flag
        .clone()
        .or_else(|| config_out.clone())
        .unwrap_or_else(|| Path::new(".").to_path_buf());
    OutputDir::create(&root)
}
