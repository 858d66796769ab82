//! Subcommand implementations.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::report::{log_log_slope, mean_se, to_value, RunReport, Timings};
use super::{AlgorithmArg, BenchArgs, Command, Dataset, InputArgs, OutputArgs, RegressArgs, SampleArgs, Suite, VerifyArgs};
use crate::error::{Error, Result};
use crate::fixtures::{self, Fixture};
use crate::linalg::Matrix;
use crate::oracle::{self, IdentityId, IdentityReport};
use crate::regression::{self, RegressionProblem};
use crate::sampling::{self, replicate_rng, rng_from_seed, Algorithm, SamplerConfig, SubsetSample};

pub fn run(cmd: &Command, echo: Vec<String>) -> Result<i32> {
    match cmd {
        Command::Sample(a) => cmd_sample(a, echo),
        Command::Regress(a) => cmd_regress(a, echo),
        Command::Verify(a) => cmd_verify(a, echo),
        Command::Bench(a) => cmd_bench(a, echo),
    }
}

fn load(a: &InputArgs) -> Result<Dataset> {
    super::parse_dataset(&a.input, a.format, a.features)
}

fn emit(out: &OutputArgs, echo: Vec<String>, timings: Timings, result: Value) -> Result<()> {
    let report = RunReport {
        command: echo,
        seed: out.seed,
        timings_ms: out.timings.then(|| timings.into_map()),
        result,
    };
    if let Some(path) = &out.json {
        report.write(path)?;
    }
    Ok(())
}

fn warn_below_d_lambda(x: &Matrix, size: usize, lambda: f64) {
    if lambda > 0.0 {
        if let Ok(dl) = oracle::d_lambda(x, lambda) {
            if (size as f64) < dl {
                eprintln!("warning: sample size {size} is below the statistical dimension d_lambda = {dl:.4}");
            }
        }
    }
}

/// One subset from `alg`; the oracle draws from the enumerated exact law.
pub fn draw<R: Rng + ?Sized>(
    x: &Matrix,
    alg: AlgorithmArg,
    size: usize,
    lambda: f64,
    seed: u64,
    rng: &mut R,
) -> Result<SubsetSample> {
    match alg.sampler() {
        Some(a) => sampling::sample_with(x, &SamplerConfig::new(a, size, lambda, seed), rng),
        None => {
            SamplerConfig::new(Algorithm::RegVol, size, lambda, seed).validate(x)?;
            let dist = oracle::exact_distribution(x, size, lambda)?;
            let mut s = SubsetSample::from_indices(dist.sample(rng), lambda);
            s.seed = seed;
            Ok(s)
        }
    }
}

fn cmd_sample(a: &SampleArgs, echo: Vec<String>) -> Result<i32> {
    let mut t = Timings::default();
    let ds = t.time("parse", || load(&a.input))?;
    let x = ds.problem.x();
    warn_below_d_lambda(x, a.size, a.lambda);
    let seed = a.output.seed;
    let s = t.time("sample", || {
        draw(x, a.algorithm, a.size, a.lambda, seed, &mut rng_from_seed(seed))
    })?;
    let line: Vec<String> = s.indices.iter().map(usize::to_string).collect();
    println!("{}", line.join(" "));
    let result = json!({
        "algorithm": a.algorithm.name(),
        "n": ds.row_count(),
        "d": ds.feature_count(),
        "size": a.size,
        "lambda": a.lambda,
        "indices": s.indices,
        "rejection_trials": s.rejection_trials,
        "removal_order": s.removal_order,
        "importance_weights": s.importance_weights,
    });
    emit(&a.output, echo, t, result)?;
    Ok(0)
}

#[derive(Clone, Debug, Serialize)]
pub struct RegressSummary {
    pub algorithm: &'static str,
    pub lambda: f64,
    pub size: usize,
    pub replicates: u64,
    pub averaged: bool,
    /// `‖Xw - y‖²`: mean over replicates, or of the averaged estimator.
    pub mean_total_loss: f64,
    pub se_total_loss: f64,
    /// `(1/n)‖Xw - y‖²`.
    pub mean_normalized_loss: f64,
    pub se_normalized_loss: f64,
    pub rank_deficient: u64,
    pub mean_rejection_trials: f64,
    /// Loss of the full-data estimator at the same λ.
    pub full_data_total_loss: f64,
    /// `E[L(w*_λ(S))]` under the exact law (oracle only).
    pub exact_mean_total_loss: Option<f64>,
}

/// Runs `replicates` independent subsets (replicate `r` uses stream `r` of
/// `seed`) and summarizes the losses.
pub fn regress_one(
    p: &RegressionProblem,
    alg: AlgorithmArg,
    size: usize,
    lambda: f64,
    replicates: u64,
    average: bool,
    seed: u64,
) -> Result<RegressSummary> {
    let n = p.n() as f64;
    let mut totals = Vec::new();
    let mut trials = Vec::new();
    let mut kept = Vec::new();
    let mut rank_deficient = 0;
    for r in 0..replicates {
        let mut rng = replicate_rng(seed, r);
        let s = draw(p.x(), alg, size, lambda, seed, &mut rng)?;
        trials.push(s.rejection_trials as f64);
        match regression::solve_subproblem(p, &s, lambda) {
            Ok(e) => {
                totals.push(regression::total_loss(p, &e));
                kept.push(s);
            }
            Err(Error::RankDeficientSubset) => rank_deficient += 1,
            Err(e) => return Err(e),
        }
    }
    let (mut mean, mut se) = mean_se(&totals);
    if average {
        let e = regression::averaged_estimator(p, &kept, lambda)?;
        mean = regression::total_loss(p, &e);
        se = 0.0;
    }
    let exact_mean_total_loss = if alg == AlgorithmArg::Oracle && !average {
        let dist = oracle::exact_distribution(p.x(), size, lambda)?;
        let mut acc = 0.0;
        for (subset, prob) in dist.support() {
            let e = regression::solve_on_rows(p, subset, None, lambda)?;
            acc += prob * regression::total_loss(p, &e);
        }
        Some(acc)
    } else {
        None
    };
    Ok(RegressSummary {
        algorithm: alg.name(),
        lambda,
        size,
        replicates,
        averaged: average,
        mean_total_loss: mean,
        se_total_loss: se,
        mean_normalized_loss: mean / n,
        se_normalized_loss: se / n,
        rank_deficient,
        mean_rejection_trials: mean_se(&trials).0,
        full_data_total_loss: regression::total_loss(p, &regression::least_squares(p, lambda)?),
        exact_mean_total_loss,
    })
}

fn cmd_regress(a: &RegressArgs, echo: Vec<String>) -> Result<i32> {
    if a.replicates == 0 {
        return Err(Error::InvalidConfig("--replicates must be at least 1".into()));
    }
    let mut t = Timings::default();
    let ds = t.time("parse", || load(&a.input))?;
    let p = &ds.problem;
    let lambdas = a.lambda_grid.clone().unwrap_or_else(|| vec![a.lambda]);
    let mut runs = Vec::new();
    for &alg in &a.algorithm {
        for &lambda in &lambdas {
            warn_below_d_lambda(p.x(), a.size, lambda);
            let r = t.time(alg.name(), || {
                regress_one(p, alg, a.size, lambda, a.replicates, a.average, a.output.seed)
            })?;
            println!(
                "{:<10} lambda={:<8} s={:<5} total loss {:.6} ± {:.6}  (per row {:.6})  full data {:.6}{}",
                r.algorithm,
                r.lambda,
                r.size,
                r.mean_total_loss,
                r.se_total_loss,
                r.mean_normalized_loss,
                r.full_data_total_loss,
                r.exact_mean_total_loss
                    .map(|v| format!("  exact {v:.6}"))
                    .unwrap_or_default()
            );
            runs.push(r);
        }
    }
    let result = json!({
        "n": ds.row_count(),
        "d": ds.feature_count(),
        "runs": to_value(&runs),
    });
    emit(&a.output, echo, t, result)?;
    Ok(0)
}

/// Collects `verify_identity` over every size, dropping unsupported pairs.
fn identities_on(f: &Fixture, lambda: f64, ids: &[IdentityId], out: &mut Vec<IdentityReport>) -> Result<()> {
    let (n, d) = (f.x.rows(), f.x.cols());
    for &id in ids {
        for s in d..=n {
            match oracle::verify_identity(id, f, s, lambda) {
                Ok(r) => out.push(r),
                Err(Error::UnsupportedCombination(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

fn print_identity(r: &IdentityReport) {
    println!(
        "{} {:<18} {:<28} s={:<3} lambda={:<6} max_rel_dev={:.3e}{}",
        if r.passed { "PASS" } else { "FAIL" },
        r.id.name(),
        r.fixture,
        r.s,
        r.lambda,
        r.max_rel_dev,
        r.psd_margin.map(|m| format!(" psd_margin={m:.3e}")).unwrap_or_default()
    );
}

fn suite_identities(seed: u64) -> Result<Vec<IdentityReport>> {
    let mut fixtures = vec![
        fixtures::degenerate(),
        fixtures::perturbed(0.1),
        fixtures::centered_simplex(2, 1.0),
        fixtures::centered_simplex(3, 1.0),
    ];
    for (n, d) in [(6, 1), (6, 2), (8, 2), (8, 3)] {
        fixtures.push(fixtures::gaussian_fixture(n, d, seed));
    }
    let mut out = Vec::new();
    for f in &fixtures {
        identities_on(f, 0.0, &IdentityId::ALL, &mut out)?;
    }
    Ok(out)
}

fn suite_regression_bounds(seed: u64) -> Result<Vec<IdentityReport>> {
    let f = fixtures::gaussian_fixture(8, 3, seed);
    let mut out = Vec::new();
    for lambda in [0.01, 0.1, 1.0] {
        let dl = oracle::d_lambda(&f.x, lambda)?;
        for s in (dl.ceil() as usize).max(1)..=f.x.rows() {
            for id in [IdentityId::RegInverseBound, IdentityId::Normalization] {
                out.push(oracle::verify_identity(id, &f, s, lambda)?);
            }
        }
    }
    Ok(out)
}

/// Maximum TV distance accepted by the distribution suite.
pub const TV_TOLERANCE: f64 = 0.02;
/// Maximum per-row marginal z-score accepted by the distribution suite.
pub const MARGINAL_Z_TOLERANCE: f64 = 4.0;

fn suite_distribution(seed: u64, draws: u64) -> Result<(Vec<Value>, bool)> {
    let d = 2;
    let x = fixtures::gaussian(8, d, seed);
    let mut configs = Vec::new();
    for alg in [Algorithm::RegVol, Algorithm::FastRegVol] {
        for s in [d, d + 2] {
            configs.push(SamplerConfig::new(alg, s, 0.0, seed));
        }
        configs.push(SamplerConfig::new(alg, 1, 0.5, seed));
    }
    configs.push(SamplerConfig::new(Algorithm::LeverageIid, d, 0.0, seed));
    let mut all_passed = true;
    let mut out = Vec::new();
    for cfg in configs {
        let r = oracle::empirical_distribution_test(&x, &cfg, draws)?;
        let passed = r.tv_distance < TV_TOLERANCE
            && r.zero_probability_hits == 0
            && r.marginal_max_z <= MARGINAL_Z_TOLERANCE;
        all_passed &= passed;
        println!(
            "{} {:<10} s={} lambda={:<4} tv={:.4} marginal_max_z={:.2} chi2={:.1}/{}",
            if passed { "PASS" } else { "FAIL" },
            cfg.algorithm.name(),
            cfg.size,
            cfg.lambda,
            r.tv_distance,
            r.marginal_max_z,
            r.chi_square,
            r.degrees_of_freedom
        );
        let mut v = to_value(&r);
        v["passed"] = json!(passed);
        v["size"] = json!(cfg.size);
        v["lambda"] = json!(cfg.lambda);
        out.push(v);
    }
    Ok((out, all_passed))
}

fn cmd_verify(a: &VerifyArgs, echo: Vec<String>) -> Result<i32> {
    let mut t = Timings::default();
    let seed = a.output.seed;
    let (result, passed) = match a.suite {
        Suite::Identities | Suite::RegressionBounds => {
            let reports = t.time("verify", || match a.suite {
                Suite::Identities => suite_identities(seed),
                _ => suite_regression_bounds(seed),
            })?;
            reports.iter().for_each(print_identity);
            let passed = reports.iter().all(|r| r.passed);
            (json!({ "reports": to_value(&reports), "passed": passed }), passed)
        }
        Suite::Distribution => {
            let (reports, passed) = t.time("verify", || suite_distribution(seed, a.draws))?;
            (json!({ "reports": reports, "passed": passed }), passed)
        }
    };
    emit(&a.output, echo, t, result)?;
    Ok(if passed { 0 } else { 1 })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchSeries {
    pub algorithm: &'static str,
    /// Median wall-clock milliseconds per size.
    pub median_ms: Vec<f64>,
    pub log_log_slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub d: usize,
    pub s: usize,
    pub sizes: Vec<usize>,
    pub series: Vec<BenchSeries>,
    /// `time(regvol) / time(fastregvol)` per size, when both were run.
    pub ratio_regvol_over_fast: Option<Vec<f64>>,
    pub ratio_nondecreasing: Option<bool>,
}

pub const BENCH_REPETITIONS: usize = 5;

/// Median of [`BENCH_REPETITIONS`] timed draws after one warm-up, for each
/// algorithm and row count, on seeded Gaussian data.
pub fn bench_grid(algs: &[Algorithm], sizes: &[usize], d: usize, s: usize, seed: u64) -> Result<BenchResult> {
    let mut times = vec![Vec::new(); algs.len()];
    for &n in sizes {
        let x = fixtures::gaussian(n, d, seed);
        for (k, &alg) in algs.iter().enumerate() {
            let cfg = SamplerConfig::new(alg, s, 0.0, seed);
            sampling::sample_with(&x, &cfg, &mut replicate_rng(seed, 0))?;
            let mut reps = Vec::with_capacity(BENCH_REPETITIONS);
            for r in 0..BENCH_REPETITIONS {
                let mut rng = replicate_rng(seed, r as u64 + 1);
                let start = Instant::now();
                sampling::sample_with(&x, &cfg, &mut rng)?;
                reps.push(start.elapsed().as_secs_f64() * 1e3);
            }
            reps.sort_by(f64::total_cmp);
            times[k].push(reps[BENCH_REPETITIONS / 2]);
        }
    }
    let series: Vec<BenchSeries> = algs
        .iter()
        .zip(times)
        .map(|(alg, median_ms)| {
            let pts: Vec<(f64, f64)> = sizes.iter().zip(&median_ms).map(|(&n, &t)| (n as f64, t)).collect();
            BenchSeries {
                algorithm: alg.name(),
                log_log_slope: if sizes.len() > 1 { log_log_slope(&pts) } else { f64::NAN },
                median_ms,
            }
        })
        .collect();
    let find = |a: Algorithm| series.iter().find(|s| s.algorithm == a.name());
    let ratio = match (find(Algorithm::RegVol), find(Algorithm::FastRegVol)) {
        (Some(r), Some(f)) => Some(r.median_ms.iter().zip(&f.median_ms).map(|(a, b)| a / b).collect::<Vec<f64>>()),
        _ => None,
    };
    let ratio_nondecreasing = ratio.as_ref().map(|r| r.windows(2).all(|w| w[1] >= w[0]));
    Ok(BenchResult {
        d,
        s,
        sizes: sizes.to_vec(),
        series,
        ratio_regvol_over_fast: ratio,
        ratio_nondecreasing,
    })
}

fn cmd_bench(a: &BenchArgs, echo: Vec<String>) -> Result<i32> {
    let algs: Vec<Algorithm> = a
        .algorithm
        .iter()
        .map(|&alg| {
            alg.sampler()
                .ok_or_else(|| Error::InvalidConfig("the oracle cannot be benchmarked".into()))
        })
        .collect::<Result<_>>()?;
    if a.sizes.is_empty() {
        return Err(Error::InvalidConfig("--sizes needs at least one value".into()));
    }
    let s = a.s.unwrap_or(a.d);
    let r = bench_grid(&algs, &a.sizes, a.d, s, a.seed)?;
    for series in &r.series {
        let cells: Vec<String> = r
            .sizes
            .iter()
            .zip(&series.median_ms)
            .map(|(n, t)| format!("n={n}:{t:.3}ms"))
            .collect();
        println!("{:<10} slope={:.3}  {}", series.algorithm, series.log_log_slope, cells.join(" "));
    }
    if let Some(ratio) = &r.ratio_regvol_over_fast {
        let cells: Vec<String> = ratio.iter().map(|v| format!("{v:.2}")).collect();
        println!("regvol/fastregvol ratio: {}", cells.join(" "));
    }
    let report = RunReport {
        command: echo,
        seed: a.seed,
        timings_ms: None,
        result: to_value(&r),
    };
    if let Some(path) = &a.json {
        report.write(path)?;
    }
    Ok(0)
}
