//! JSON run configurations and the string grammars for schemes, estimators,
//! designs, and subclass-count rules.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use fullsub::estimators::{DrSign, EstimatorKind};
use fullsub::glm::{FitOptions, LinkKind};
use fullsub::pipeline::SchemeSpec;
use fullsub::simulate::{DesignKind, KRule, OrSpec, PsSpec};

use crate::error::{CliError, CliResult};

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

pub fn fit_options(glm: &Option<GlmSection>) -> FitOptions {
    let defaults = FitOptions::default();
    match glm {
        None => defaults,
        Some(section) => FitOptions {
            tol: section.tol.unwrap_or(defaults.tol),
            max_iter: section.max_iter.unwrap_or(defaults.max_iter),
        },
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub designs: Option<Vec<String>>,
    pub n: Vec<usize>,
    pub ps_specs: Option<Vec<String>>,
    /// Outcome-regression specifications; applied to `dr` cells only.
    pub or_specs: Option<Vec<String>>,
    pub estimators: Vec<String>,
    pub schemes: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    pub dr_sign: Option<String>,
    pub glm: Option<GlmSection>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnsSection {
    pub treatment: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    /// Overrides the covariates entering the propensity model.
    pub ps_covariates: Option<Vec<String>>,
    /// Overrides the covariates entering the imbalance measure.
    pub balance_covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub enabled: bool,
    pub b: Option<usize>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub input: PathBuf,
    pub columns: ColumnsSection,
    pub ps_link: Option<String>,
    pub schemes: Vec<String>,
    pub estimators: Vec<String>,
    pub dr_sign: Option<String>,
    pub bootstrap: Option<BootstrapSection>,
    pub seed: Option<u64>,
    /// Threshold for the positivity diagnostic (`diagnose` subcommand).
    pub positivity_delta: Option<f64>,
    pub glm: Option<GlmSection>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudyConfig {
    pub n_grid: Vec<usize>,
    pub k_rule: String,
    pub replications: usize,
    pub seed: u64,
    pub design: Option<String>,
    pub ps_spec: Option<String>,
    pub glm: Option<GlmSection>,
    pub out: Option<PathBuf>,
}

/// Scheme grammar: `true`, `ipw` (alias `logit`), `trimmed[:q]`,
/// `subclass:k`, `naive` (= `subclass:1`), `full_subclass` (alias `fs`).
pub fn parse_scheme(text: &str) -> CliResult<SchemeSpec> {
    let bad = |msg: String| CliError::Config(msg);
    match text {
        "true" => Ok(SchemeSpec::TrueScores),
        "ipw" | "logit" => Ok(SchemeSpec::Ipw),
        "trimmed" => Ok(SchemeSpec::Trimmed { quantile: 0.95 }),
        "naive" => Ok(SchemeSpec::Subclass { k: 1 }),
        "full_subclass" | "fs" => Ok(SchemeSpec::FullSubclass),
        other => {
            if let Some(q) = other.strip_prefix("trimmed:") {
                let quantile: f64 = q
                    .parse()
                    .map_err(|_| bad(format!("bad trim quantile in scheme '{other}'")))?;
                if !(quantile > 0.0 && quantile < 1.0) {
                    return Err(bad(format!("trim quantile {quantile} outside (0,1)")));
                }
                return Ok(SchemeSpec::Trimmed { quantile });
            }
            if let Some(k) = other.strip_prefix("subclass:") {
                let k: usize = k
                    .parse()
                    .map_err(|_| bad(format!("bad class count in '{other}'")))?;
                if k == 0 {
                    return Err(bad("subclass scheme needs k >= 1".into()));
                }
                return Ok(SchemeSpec::Subclass { k });
            }
            Err(bad(format!(
                "unknown scheme '{other}' (expected true, ipw, trimmed[:q], subclass:k, naive, full_subclass)"
            )))
        }
    }
}

pub fn parse_estimator(text: &str) -> CliResult<EstimatorKind> {
    match text {
        "ht" => Ok(EstimatorKind::HorvitzThompson),
        "hajek" => Ok(EstimatorKind::Hajek),
        "dr" => Ok(EstimatorKind::DoublyRobust),
        other => Err(CliError::Config(format!(
            "unknown estimator '{other}' (expected ht, hajek, dr)"
        ))),
    }
}

pub fn parse_design(text: &str) -> CliResult<DesignKind> {
    match text {
        "ks_logit" => Ok(DesignKind::KsLogit),
        "cloglog_variant" => Ok(DesignKind::CloglogVariant),
        other => Err(CliError::Config(format!(
            "unknown design '{other}' (expected ks_logit, cloglog_variant)"
        ))),
    }
}

pub fn parse_ps_spec(text: &str) -> CliResult<PsSpec> {
    match text {
        "correct" => Ok(PsSpec::Correct),
        "incorrect" => Ok(PsSpec::Incorrect),
        other => Err(CliError::Config(format!(
            "unknown propensity specification '{other}' (expected correct, incorrect)"
        ))),
    }
}

pub fn parse_or_spec(text: &str) -> CliResult<OrSpec> {
    match text {
        "correct" => Ok(OrSpec::Correct),
        "incorrect" => Ok(OrSpec::Incorrect),
        other => Err(CliError::Config(format!(
            "unknown outcome-regression specification '{other}' (expected correct, incorrect)"
        ))),
    }
}

pub fn parse_link(text: &str) -> CliResult<LinkKind> {
    match text {
        "logit" => Ok(LinkKind::Logit),
        "cloglog" => Ok(LinkKind::Cloglog),
        other => Err(CliError::Config(format!(
            "unknown link '{other}' (expected logit, cloglog)"
        ))),
    }
}

pub fn parse_dr_sign(text: &Option<String>) -> CliResult<DrSign> {
    match text.as_deref() {
        None | Some("standard") => Ok(DrSign::Standard),
        Some("paper") => Ok(DrSign::Paper),
        Some(other) => Err(CliError::Config(format!(
            "unknown dr_sign '{other}' (expected standard, paper)"
        ))),
    }
}

/// Rule grammar: `k_max`, `nlog2`, `fixed:K`, `power:A`.
pub fn parse_k_rule(text: &str) -> CliResult<KRule> {
    match text {
        "k_max" => Ok(KRule::KMax),
        "nlog2" => Ok(KRule::NLogSq),
        other => {
            if let Some(k) = other.strip_prefix("fixed:") {
                let k: usize = k
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad class count in '{other}'")))?;
                if k == 0 {
                    return Err(CliError::Config("fixed rule needs k >= 1".into()));
                }
                return Ok(KRule::Fixed { k });
            }
            if let Some(a) = other.strip_prefix("power:") {
                let exponent: f64 = a
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad exponent in '{other}'")))?;
                if !(exponent > 0.0) {
                    return Err(CliError::Config(
                        "power rule needs a positive exponent".into(),
                    ));
                }
                return Ok(KRule::Power { exponent });
            }
            Err(CliError::Config(format!(
                "unknown k_rule '{other}' (expected k_max, nlog2, fixed:K, power:A)"
            )))
        }
    }
}
