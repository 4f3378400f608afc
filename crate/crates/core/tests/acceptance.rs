//! Acceptance suite. Each test prints one `criterion N: PASS/FAIL` line
//! (visible with `cargo test --test acceptance -- --nocapture`); thresholds
//! are pinned in the assertions.

use std::time::Instant;

use fullsub::balance::standardized_imbalance;
use fullsub::bootstrap::resample_indices;
use fullsub::estimators::{
    hajek, horvitz_thompson, subclassification_estimate, DrSign, EstimatorKind,
};
use fullsub::glm::{fit_binary_glm, log_likelihood, log_likelihood_gradient, FitOptions, LinkKind};
use fullsub::matrix::Matrix;
use fullsub::pipeline::SchemeSpec;
use fullsub::rng::CounterRng;
use fullsub::simulate::{
    generate, rate_study, run_monte_carlo, CellSpec, DesignKind, KRule, McConfig, OrSpec, PsSpec,
    RateConfig, ScenarioConfig, GAMMA,
};
use fullsub::subclass::{find_k_max, partition_by_rank, SubclassPartition};
use fullsub::weights::{ipw_weights, subclass_weights, true_score_weights, UnitWeights};

fn criterion(id: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {id}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// A random small dataset with both arms present and arbitrary outcomes.
struct SmallDataset {
    scores: Vec<f64>,
    z: Vec<u8>,
    y: Vec<f64>,
}

fn small_dataset(stream: &CounterRng) -> SmallDataset {
    for attempt in 0..64u64 {
        let sub = stream.derive(attempt);
        let n = 10 + (sub.value(0) % 491) as usize;
        let mut scores = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let base = 8 * (1 + i as u64);
            let s = 0.02 + 0.96 * sub.uniform(base);
            scores.push(s);
            z.push(u8::from(sub.uniform(base + 1) < s));
            y.push(40.0 * sub.normal(base + 2) + 5.0);
        }
        let n1: usize = z.iter().map(|&v| usize::from(v != 0)).sum();
        if n1 > 0 && n1 < n {
            return SmallDataset { scores, z, y };
        }
    }
    unreachable!("a non-degenerate draw always appears within 64 attempts");
}

fn feasible_ks(scores: &[f64], z: &[u8]) -> Vec<usize> {
    let n1: usize = z.iter().map(|&v| usize::from(v != 0)).sum();
    let n0 = z.len() - n1;
    (1..=n1.min(n0))
        .filter(|&k| partition_by_rank(scores, z, k).unwrap().is_feasible())
        .collect()
}

/// Criterion 1: under subclass weights the Horvitz-Thompson and Hajek
/// estimators coincide to 1e-10 relative, over 200 random datasets and
/// random feasible class counts (including k_max), in under 10 s.
#[test]
fn criterion_1_proposition_identity() {
    let start = Instant::now();
    let rng = CounterRng::new(0xC1_0001);
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let data = small_dataset(&rng.derive(case));
        let ks = feasible_ks(&data.scores, &data.z);
        let (k_max, _) = find_k_max(&data.scores, &data.z).unwrap();
        assert_eq!(*ks.last().unwrap(), k_max);
        let pick = ks[(rng.derive(case).value(7) % ks.len() as u64) as usize];
        for k in [pick, k_max] {
            let partition = partition_by_rank(&data.scores, &data.z, k).unwrap();
            let w = subclass_weights(&partition, &data.z).unwrap();
            let ht = horvitz_thompson(&data.y, &data.z, &w).unwrap();
            let hj = hajek(&data.y, &data.z, &w).unwrap();
            let gap = (ht.delta - hj.delta).abs() / (1.0 + ht.delta.abs());
            worst = worst.max(gap);
            assert!(
                (ht.delta - hj.delta).abs() <= 1e-10 * (1.0 + ht.delta.abs()),
                "case {case}, k {k}: HT {} vs Hajek {}",
                ht.delta,
                hj.delta
            );
        }
    }
    let elapsed = start.elapsed();
    let pass = elapsed.as_secs_f64() < 10.0;
    assert!(criterion(
        "1",
        pass,
        &format!(
            "HT = Hajek under subclass weights on 200 datasets (worst rel gap {worst:.2e}), {:.2} s",
            elapsed.as_secs_f64()
        )
    ));
}

/// Criterion 2: the subclassification estimator equals Horvitz-Thompson with
/// subclass weights to 1e-12 relative on the same 200 datasets.
#[test]
fn criterion_2_coarsened_ipw_identity() {
    let rng = CounterRng::new(0xC1_0001);
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let data = small_dataset(&rng.derive(case));
        let ks = feasible_ks(&data.scores, &data.z);
        let pick = ks[(rng.derive(case).value(7) % ks.len() as u64) as usize];
        for k in [pick, *ks.last().unwrap()] {
            let partition = partition_by_rank(&data.scores, &data.z, k).unwrap();
            let w = subclass_weights(&partition, &data.z).unwrap();
            let sub = subclassification_estimate(&data.y, &data.z, &partition).unwrap();
            let ht = horvitz_thompson(&data.y, &data.z, &w).unwrap();
            let gap = (sub.delta - ht.delta).abs() / (1.0 + sub.delta.abs());
            worst = worst.max(gap);
            assert!(
                gap <= 1e-12,
                "case {case}, k {k}: {} vs {}",
                sub.delta,
                ht.delta
            );
        }
    }
    assert!(criterion(
        "2",
        true,
        &format!("subclassification = coarsened HT on 200 datasets (worst rel gap {worst:.2e})")
    ));
}

/// Criterion 3: with one class the subclassification estimator is the naive
/// difference in arm means, exactly.
#[test]
fn criterion_3_single_class_degeneracy() {
    let rng = CounterRng::new(0xC3_0003);
    for case in 0..50u64 {
        let data = small_dataset(&rng.derive(case));
        let partition = partition_by_rank(&data.scores, &data.z, 1).unwrap();
        let est = subclassification_estimate(&data.y, &data.z, &partition).unwrap();
        let mut sum = [0.0f64; 2];
        let mut count = [0usize; 2];
        for i in 0..data.y.len() {
            let arm = usize::from(data.z[i] != 0);
            sum[arm] += data.y[i];
            count[arm] += 1;
        }
        let naive = sum[1] / count[1] as f64 - sum[0] / count[0] as f64;
        assert_eq!(est.delta, naive, "case {case}");
    }
    assert!(criterion(
        "3",
        true,
        "K = 1 equals the naive arm-mean difference exactly"
    ));
}

fn table_cells() -> Vec<CellSpec> {
    let cell = |ps, or, estimator, scheme| CellSpec {
        design: DesignKind::KsLogit,
        n: 1000,
        ps_spec: ps,
        or_spec: or,
        estimator,
        scheme,
    };
    vec![
        cell(
            PsSpec::Correct,
            OrSpec::Correct,
            EstimatorKind::DoublyRobust,
            SchemeSpec::Ipw,
        ),
        cell(
            PsSpec::Correct,
            OrSpec::None,
            EstimatorKind::Hajek,
            SchemeSpec::Ipw,
        ),
        cell(
            PsSpec::Correct,
            OrSpec::None,
            EstimatorKind::HorvitzThompson,
            SchemeSpec::FullSubclass,
        ),
        cell(
            PsSpec::Incorrect,
            OrSpec::None,
            EstimatorKind::HorvitzThompson,
            SchemeSpec::Ipw,
        ),
        cell(
            PsSpec::Incorrect,
            OrSpec::None,
            EstimatorKind::HorvitzThompson,
            SchemeSpec::FullSubclass,
        ),
    ]
}

fn run_table_grid() -> fullsub::simulate::McResult {
    run_monte_carlo(&McConfig {
        cells: table_cells(),
        replications: 1000,
        seed: 20250801,
        fit_options: FitOptions::default(),
        dr_sign: DrSign::Standard,
    })
    .unwrap()
}

fn median_abs(estimates: &[Option<f64>]) -> f64 {
    let mut v: Vec<f64> = estimates.iter().flatten().map(|e| e.abs()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Criterion 4: benchmark bias/RMSE replication at N = 1000, R = 1000.
#[test]
fn criterion_4_table3_replication() {
    let result = run_table_grid();
    let dr = &result.cells[0];
    let hajek_logit = &result.cells[1];
    let fs = &result.cells[2];
    let ht_mis = &result.cells[3];
    let fs_mis = &result.cells[4];

    let a = dr.bias.unwrap().abs() <= 0.05 && (0.05..=0.15).contains(&dr.rmse.unwrap());
    let b =
        hajek_logit.bias.unwrap().abs() <= 0.3 && (1.0..=2.2).contains(&hajek_logit.rmse.unwrap());
    let c = fs.bias.unwrap().abs() <= 0.5 && (0.8..=1.8).contains(&fs.rmse.unwrap());
    let ratio = ht_mis.rmse.unwrap() / fs_mis.rmse.unwrap();
    let d = ratio >= 10.0;
    println!(
        "criterion 4 sanity: median |HT ipw mis| = {:.2}, median |HT fs mis| = {:.2}",
        median_abs(&ht_mis.estimates),
        median_abs(&fs_mis.estimates)
    );
    let detail = format!(
        "(a) DR bias {:+.3} rmse {:.3}; (b) Hajek bias {:+.3} rmse {:.3}; (c) FS bias {:+.3} rmse {:.3}; (d) misspecified RMSE ratio {:.1}",
        dr.bias.unwrap(), dr.rmse.unwrap(),
        hajek_logit.bias.unwrap(), hajek_logit.rmse.unwrap(),
        fs.bias.unwrap(), fs.rmse.unwrap(),
        ratio
    );
    assert!(criterion("4", a && b && c && d, &detail));
}

/// Criterion 5: mean standardized imbalance replication (model covariates).
#[test]
fn criterion_5_table2_replication() {
    let result = run_table_grid();
    let logit_correct = result.cells[1].imb_mean.unwrap();
    let fs_correct = result.cells[2].imb_mean.unwrap();
    let fs_mis = result.cells[4].imb_mean.unwrap();
    let pass = (0.04..=0.11).contains(&logit_correct)
        && (0.04..=0.12).contains(&fs_correct)
        && (0.04..=0.14).contains(&fs_mis);
    assert!(criterion(
        "5",
        pass,
        &format!(
            "mean Imb: logit correct {logit_correct:.3}, FS correct {fs_correct:.3}, FS misspecified {fs_mis:.3}"
        )
    ));
}

/// Criterion 6: empirical consistency rate of the full-subclassification
/// estimator, and the non-vanishing bias of a fixed class count.
#[test]
fn criterion_6_rate_study() {
    let grid = vec![200, 500, 1000, 2000, 5000];
    let kmax = rate_study(&RateConfig {
        n_grid: grid.clone(),
        k_rule: KRule::KMax,
        replications: 500,
        seed: 20250806,
        design: DesignKind::KsLogit,
        ps_spec: PsSpec::Correct,
        fit_options: FitOptions::default(),
    })
    .unwrap();
    let slope = kmax.log_rmse_slope.unwrap();
    let slope_ok = (-0.65..=-0.35).contains(&slope);

    let fixed = rate_study(&RateConfig {
        n_grid: vec![5000],
        k_rule: KRule::Fixed { k: 5 },
        replications: 500,
        seed: 20250806,
        design: DesignKind::KsLogit,
        ps_spec: PsSpec::Correct,
        fit_options: FitOptions::default(),
    })
    .unwrap();
    let fixed_bias = fixed.points[0].bias.unwrap().abs();
    let fs_bias = kmax.points.last().unwrap().bias.unwrap().abs();
    let bias_ok = fixed_bias >= 3.0 * fs_bias;
    assert!(criterion(
        "6",
        slope_ok && bias_ok,
        &format!(
            "log-RMSE slope {slope:.3}; |bias| at N=5000: fixed K=5 {fixed_bias:.3} vs k_max {fs_bias:.3} (ratio {:.1})",
            fixed_bias / fs_bias
        )
    ));
}

/// Criterion 7: feasibility of the K = floor(N / (ln N)^2) partition must be
/// nondecreasing in N (within 2 Monte Carlo SEs) and at least 0.99 at
/// N = 5000.
///
/// The second clause does not hold under this generator: the covariates are
/// unbounded normals, so the extreme rank classes (about (ln N)^2 units
/// each) carry assignment probabilities drifting toward 0/1 and go one-armed
/// in roughly 3% of replications at every N in this range. The measured
/// fraction at N = 5000 sits near 0.97, so this criterion fails honestly.
#[test]
fn criterion_7_feasibility_rate() {
    let result = rate_study(&RateConfig {
        n_grid: vec![200, 500, 1000, 2000, 5000],
        k_rule: KRule::NLogSq,
        replications: 500,
        seed: 20250807,
        design: DesignKind::KsLogit,
        ps_spec: PsSpec::Correct,
        fit_options: FitOptions::default(),
    })
    .unwrap();
    let fracs: Vec<f64> = result.points.iter().map(|p| p.feasible_fraction).collect();
    let r = 500.0;
    let mut nondecreasing = true;
    for w in fracs.windows(2) {
        let se = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / r).sqrt();
        if w[1] < w[0] - 2.0 * se {
            nondecreasing = false;
        }
    }
    let final_frac = *fracs.last().unwrap();
    let high_enough = final_frac >= 0.99;
    assert!(criterion(
        "7",
        nondecreasing && high_enough,
        &format!("feasibility fractions {fracs:?}; at N=5000 {final_frac:.3} (threshold 0.99)")
    ));
}

/// Criterion 8: propensity-model oracle checks — coefficient recovery at
/// N = 100000, score equation at convergence, and analytic-vs-numeric
/// gradients on 20 random small problems.
#[test]
fn criterion_8_glm_oracle() {
    let data = generate(&ScenarioConfig {
        n: 100_000,
        design: DesignKind::KsLogit,
        ps_spec: PsSpec::Correct,
        or_spec: OrSpec::None,
        seed: 20240811,
        replication_index: 0,
    })
    .unwrap();
    let fit = fit_binary_glm(&data.x, &data.z, LinkKind::Logit, &FitOptions::default()).unwrap();
    let mut slopes_ok = true;
    for j in 0..4 {
        if (fit.coefficients[j + 1] - GAMMA[j]).abs() > 0.05 {
            slopes_ok = false;
        }
    }
    // Reference fit of the identical dataset from an external GLM
    // implementation (intercept first).
    let reference = [
        -0.008701838240292425,
        -1.0026019098786494,
        0.5133877811907115,
        -0.25186277067926993,
        -0.09514736347978396,
    ];
    let reference_ok = fit
        .coefficients
        .iter()
        .zip(&reference)
        .all(|(a, b)| (a - b).abs() < 1e-5);
    let grad = log_likelihood_gradient(&fit.coefficients, &data.x, &data.z, LinkKind::Logit);
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let grad_ok = gmax <= 1e-6;

    let mut fd_ok = true;
    let rng = CounterRng::new(0xC8_0008);
    let mut checked = 0;
    let mut case = 0u64;
    while checked < 20 {
        case += 1;
        let stream = rng.derive(case);
        let n = 25 + (stream.value(0) % 30) as usize;
        let mut rows = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let base = 8 * (1 + i as u64);
            rows.push(vec![stream.normal(base), stream.normal(base + 1)]);
            z.push(u8::from(stream.uniform(base + 2) < 0.5));
        }
        let n1: usize = z.iter().map(|&v| usize::from(v != 0)).sum();
        if n1 == 0 || n1 == n {
            continue;
        }
        checked += 1;
        let x = Matrix::from_rows(&rows);
        let link = if case % 2 == 0 {
            LinkKind::Logit
        } else {
            LinkKind::Cloglog
        };
        let beta = vec![
            0.4 * stream.normal(1_000_000),
            0.4 * stream.normal(1_000_001),
            0.4 * stream.normal(1_000_002),
        ];
        let analytic = log_likelihood_gradient(&beta, &x, &z, link);
        let h = 1e-5;
        for j in 0..beta.len() {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (log_likelihood(&up, &x, &z, link) - log_likelihood(&down, &x, &z, link))
                / (2.0 * h);
            if (analytic[j] - fd).abs() / analytic[j].abs().max(1e-3) > 1e-6 {
                fd_ok = false;
            }
        }
    }
    assert!(criterion(
        "8",
        slopes_ok && reference_ok && grad_ok && fd_ok,
        &format!(
            "slopes {:?} vs gamma (±0.05), reference match {reference_ok}, gradient max-abs {gmax:.2e}, finite differences on 20 problems: {fd_ok}",
            &fit.coefficients[1..]
        )
    ));
}

/// Fixed tiny design for the exhaustive-enumeration oracle.
struct TinyDesign {
    scores: Vec<f64>,
    y1: Vec<f64>,
    y0: Vec<f64>,
    k: usize,
}

impl TinyDesign {
    fn outcomes(&self, pattern: usize) -> (Vec<u8>, Vec<f64>) {
        let n = self.scores.len();
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let zi = u8::from(pattern >> i & 1 == 1);
            z.push(zi);
            y.push(if zi != 0 { self.y1[i] } else { self.y0[i] });
        }
        (z, y)
    }

    fn probability(&self, pattern: usize) -> f64 {
        let mut p = 1.0;
        for (i, &s) in self.scores.iter().enumerate() {
            p *= if pattern >> i & 1 == 1 { s } else { 1.0 - s };
        }
        p
    }
}

fn tiny_estimates(design: &TinyDesign, z: &[u8], y: &[f64]) -> [Option<f64>; 3] {
    let ht = true_score_weights(&design.scores, z)
        .ok()
        .and_then(|w| horvitz_thompson(y, z, &w).ok())
        .map(|e| e.delta);
    let hj = true_score_weights(&design.scores, z)
        .ok()
        .and_then(|w| hajek(y, z, &w).ok())
        .map(|e| e.delta);
    let sub = partition_by_rank(&design.scores, z, design.k)
        .ok()
        .filter(SubclassPartition::is_feasible)
        .and_then(|p| subclassification_estimate(y, z, &p).ok())
        .map(|e| e.delta);
    [ht, hj, sub]
}

/// Criterion 9: Monte Carlo means match the exhaustive enumeration over all
/// 2^N treatment patterns, within 3 Monte Carlo standard errors.
#[test]
fn criterion_9_enumeration_oracle() {
    let design = TinyDesign {
        scores: vec![0.2, 0.35, 0.45, 0.55, 0.65, 0.8],
        y1: vec![3.0, 1.0, 4.0, 1.5, 5.0, 9.0],
        y0: vec![2.0, 6.0, 5.0, 3.0, 5.0, 8.0],
        k: 2,
    };
    let n = design.scores.len();

    // Exhaustive enumeration, conditioning on the estimator being defined
    // (matching the harness's NA-cell semantics).
    let mut expectation = [0.0f64; 3];
    let mut mass = [0.0f64; 3];
    for pattern in 0..(1usize << n) {
        let (z, y) = design.outcomes(pattern);
        let p = design.probability(pattern);
        for (slot, est) in tiny_estimates(&design, &z, &y).into_iter().enumerate() {
            if let Some(delta) = est {
                expectation[slot] += p * delta;
                mass[slot] += p;
            }
        }
    }
    for slot in 0..3 {
        expectation[slot] /= mass[slot];
    }

    // Monte Carlo over the same design.
    let rng = CounterRng::new(0xC9_0009);
    let replications = 4000u64;
    let mut draws: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for rep in 0..replications {
        let stream = rng.derive(rep);
        let z: Vec<u8> = (0..n)
            .map(|i| u8::from(stream.uniform(i as u64) < design.scores[i]))
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if z[i] != 0 {
                    design.y1[i]
                } else {
                    design.y0[i]
                }
            })
            .collect();
        for (slot, est) in tiny_estimates(&design, &z, &y).into_iter().enumerate() {
            if let Some(delta) = est {
                draws[slot].push(delta);
            }
        }
    }
    let labels = ["HT", "Hajek", "Subclass"];
    let mut pass = true;
    let mut details = Vec::new();
    for slot in 0..3 {
        let m = draws[slot].len() as f64;
        let mean = draws[slot].iter().sum::<f64>() / m;
        let var = draws[slot]
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (m - 1.0);
        let se = (var / m).sqrt();
        let gap = (mean - expectation[slot]).abs();
        if gap > 3.0 * se {
            pass = false;
        }
        details.push(format!(
            "{} mc {mean:.4} vs enum {:.4} ({:.1} se)",
            labels[slot],
            expectation[slot],
            gap / se
        ));
    }
    assert!(criterion("9", pass, &details.join("; ")));
}

/// Criterion 10: invariance suite — imbalance under covariate
/// reparameterization, estimator location/scale equivariance, and
/// thread-count-independent determinism of the Monte Carlo harness.
#[test]
fn criterion_10_invariance_suite() {
    // (a) Imbalance invariant under X -> X A for random nonsingular A.
    let rng = CounterRng::new(0xCA_000A);
    let n = 80;
    let p = 4;
    let mut rows = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let base = 8 * (1 + i as u64);
        rows.push(
            (0..p)
                .map(|j| rng.normal(base + j as u64))
                .collect::<Vec<_>>(),
        );
        z.push(u8::from(rng.uniform(base + 5) < 0.5));
        w.push(1.0 + 3.0 * rng.uniform(base + 6));
    }
    let x = Matrix::from_rows(&rows);
    let uw = UnitWeights {
        included: vec![true; n],
        w,
        scheme: fullsub::weights::WeightScheme::TrueWeights,
    };
    let base_imb = standardized_imbalance(&x, &z, &uw).unwrap();
    let mut imb_ok = true;
    for trial in 0..8u64 {
        let tr = rng.derive(5000 + trial);
        let a: Vec<Vec<f64>> = (0..p)
            .map(|r| {
                (0..p)
                    .map(|c| f64::from(u8::from(r == c)) + 0.4 * tr.normal((r * p + c) as u64))
                    .collect()
            })
            .collect();
        let xa_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| {
                (0..p)
                    .map(|c| (0..p).map(|k| row[k] * a[k][c]).sum::<f64>())
                    .collect()
            })
            .collect();
        let imb = standardized_imbalance(&Matrix::from_rows(&xa_rows), &z, &uw).unwrap();
        if (imb - base_imb).abs() > 1e-8 * (1.0 + base_imb) {
            imb_ok = false;
        }
    }

    // (b) Location/scale equivariance of the estimators.
    let data = small_dataset(&rng.derive(77));
    let weights = ipw_weights(&data.scores, &data.z, LinkKind::Logit).unwrap();
    let c = 19.25;
    let a = -2.5;
    let shifted: Vec<f64> = data.y.iter().map(|&v| v + c).collect();
    let scaled: Vec<f64> = data.y.iter().map(|&v| a * v).collect();
    let ht = horvitz_thompson(&data.y, &data.z, &weights).unwrap();
    let ht_shift = horvitz_thompson(&shifted, &data.z, &weights).unwrap();
    let nf = data.y.len() as f64;
    let w1: f64 = weights
        .w
        .iter()
        .zip(&data.z)
        .filter(|(_, &z)| z != 0)
        .map(|(&w, _)| w)
        .sum();
    let w0: f64 = weights
        .w
        .iter()
        .zip(&data.z)
        .filter(|(_, &z)| z == 0)
        .map(|(&w, _)| w)
        .sum();
    let mut equiv_ok = (ht_shift.mu1 - ht.mu1 - c * w1 / nf).abs() < 1e-9
        && (ht_shift.mu0 - ht.mu0 - c * w0 / nf).abs() < 1e-9;
    let hj = hajek(&data.y, &data.z, &weights).unwrap();
    let hj_shift = hajek(&shifted, &data.z, &weights).unwrap();
    equiv_ok &= (hj.delta - hj_shift.delta).abs() < 1e-9;
    let (_, partition) = find_k_max(&data.scores, &data.z).unwrap();
    let sub = subclassification_estimate(&data.y, &data.z, &partition).unwrap();
    let sub_shift = subclassification_estimate(&shifted, &data.z, &partition).unwrap();
    equiv_ok &= (sub.delta - sub_shift.delta).abs() < 1e-9;
    for (scaled_est, base_est) in [
        (
            horvitz_thompson(&scaled, &data.z, &weights).unwrap().delta,
            ht.delta,
        ),
        (hajek(&scaled, &data.z, &weights).unwrap().delta, hj.delta),
        (
            subclassification_estimate(&scaled, &data.z, &partition)
                .unwrap()
                .delta,
            sub.delta,
        ),
    ] {
        equiv_ok &= (scaled_est - a * base_est).abs() < 1e-9 * (1.0 + base_est.abs());
    }

    // (c) Determinism: identical results on repeated runs and across thread
    // counts.
    let cfg = McConfig {
        cells: table_cells().into_iter().take(3).collect(),
        replications: 40,
        seed: 99,
        fit_options: FitOptions::default(),
        dr_sign: DrSign::Standard,
    };
    let small = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_monte_carlo(&cfg).unwrap())
    };
    let one = small(1);
    let four = small(4);
    let again = small(4);
    let det_ok = one == four && four == again;
    // Resample streams are also schedule-free by construction.
    let det_ok = det_ok && resample_indices(5, 3, 50) == resample_indices(5, 3, 50);

    assert!(criterion(
        "10",
        imb_ok && equiv_ok && det_ok,
        &format!(
            "imbalance reparameterization {imb_ok}, estimator equivariance {equiv_ok}, determinism across thread counts {det_ok}"
        )
    ));
}
