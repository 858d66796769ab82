//! Exact subset distributions and the identity catalog checked against them.
//!
//! Two independent routes to the size-`s` law:
//!
//! * [`closed_form_distribution`] (λ = 0): `P(S) ∝ det(X_SᵀX_S)` over every
//!   size-`s` subset, normalized by log-sum-exp.
//! * [`dag_distribution`] (any λ ≥ 0): pushes probability mass down the
//!   reverse-removal DAG level by level. Edge weights are the determinant
//!   ratios `det(X_{S-i}ᵀX_{S-i} + λI) / det(X_SᵀX_S + λI)`, computed from
//!   separate factorizations rather than from the samplers' rank-one path.
//!
//! All probabilities are kept in log space. Enumeration beyond
//! [`ENUMERATION_LIMIT`] subsets is refused, never truncated.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::linalg::{self, gram, gram_rows, Matrix};
use crate::regression::{self, RegressionProblem};
use crate::sampling::{self, replicate_rng, Algorithm, SamplerConfig};

pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Relative deviation allowed for equality identities.
pub const EQUALITY_TOL: f64 = 1e-9;

/// Most negative eigenvalue of `rhs - lhs` allowed for inequality identities.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ClosedFormDet,
    DagPropagation,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = match r.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    r
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| (((n - i) as f64) / ((i + 1) as f64)).ln()).sum()
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln det(X_SᵀX_S + λI)`, or `-∞` when the factorization fails.
fn subset_logdet(x: &Matrix, subset: &[usize], lambda: f64) -> f64 {
    gram_rows(x, subset.iter().copied(), lambda)
        .cholesky()
        .map_or(f64::NEG_INFINITY, |c| c.logdet())
}

/// Exact law of a size-`s` subset sampler.
#[derive(Clone, Debug, Serialize)]
pub struct ExactSubsetDistribution {
    pub n: usize,
    pub s: usize,
    pub lambda: f64,
    pub method: Method,
    /// Every size-`s` subset (sorted) to its log-probability.
    log_probs: BTreeMap<Vec<usize>, f64>,
    /// `ln Σ_S det(X_SᵀX_S)` for the closed form.
    pub log_normalizer: Option<f64>,
    /// Worst DAG node for the edge-weight normalization: `(Σ ratios, |S| - d + λ tr Z)`.
    pub normalization_worst: Option<(f64, f64)>,
}

impl ExactSubsetDistribution {
    pub fn log_prob(&self, subset: &[usize]) -> f64 {
        self.log_probs
            .get(subset)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, subset: &[usize]) -> f64 {
        self.log_prob(subset).exp()
    }

    /// All subsets with their probabilities, in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.log_probs.iter().map(|(k, &lp)| (k.as_slice(), lp.exp()))
    }

    /// Subsets of positive probability.
    pub fn support(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.iter().filter(|&(_, p)| p > 0.0)
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// `ln Σ_S P(S)`; zero for a normalized law.
    pub fn total_log_mass(&self) -> f64 {
        log_sum_exp(self.log_probs.values().copied())
    }

    /// `P(i ∈ S)` for every row.
    pub fn marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for (subset, p) in self.support() {
            for &i in subset {
                m[i] += p;
            }
        }
        m
    }

    /// `Σ_S P(S) F(S)` over the support.
    pub fn expectation(&self, mut f: impl FnMut(&[usize]) -> Result<Matrix>) -> Result<Matrix> {
        let mut acc: Option<Matrix> = None;
        for (subset, p) in self.support() {
            let v = f(subset)?;
            match acc.as_mut() {
                Some(a) => a.add_scaled(p, &v),
                None => acc = Some(v.scale(p)),
            }
        }
        acc.ok_or_else(|| Error::InvalidConfig("distribution has empty support".into()))
    }

    /// Draws one subset by inverting the cumulative table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (subset, p) in self.support() {
            acc += p;
            last = Some(subset);
            if u < acc {
                return subset.to_vec();
            }
        }
        last.expect("non-empty support").to_vec()
    }
}

fn check_subset_count(count: u128) -> Result<()> {
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// λ = 0 volume sampling by direct enumeration of `det(X_SᵀX_S)`.
pub fn closed_form_distribution(x: &Matrix, s: usize) -> Result<ExactSubsetDistribution> {
    let (n, d) = (x.rows(), x.cols());
    if s < d || s > n {
        return Err(Error::InvalidConfig(format!(
            "closed form needs d <= s <= n, got s = {s}, d = {d}, n = {n}"
        )));
    }
    check_subset_count(binomial(n, s))?;
    gram(x, 0.0).cholesky()?;
    let logdets: Vec<(Vec<usize>, f64)> = (0..n)
        .combinations(s)
        .map(|c| {
            let ld = subset_logdet(x, &c, 0.0);
            (c, ld)
        })
        .collect();
    let log_z = log_sum_exp(logdets.iter().map(|(_, ld)| *ld));
    Ok(ExactSubsetDistribution {
        n,
        s,
        lambda: 0.0,
        method: Method::ClosedFormDet,
        log_probs: logdets.into_iter().map(|(c, ld)| (c, ld - log_z)).collect(),
        log_normalizer: Some(log_z),
        normalization_worst: None,
    })
}

/// λ-regularized volume sampling by propagating probability through the
/// reverse-removal DAG from `{0..n-1}` down to level `s`. Zero-probability
/// nodes are pruned; a reached node of zero volume splits uniformly.
pub fn dag_distribution(x: &Matrix, s: usize, lambda: f64) -> Result<ExactSubsetDistribution> {
    let (n, d) = (x.rows(), x.cols());
    if s > n || (lambda == 0.0 && s < d) || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "DAG propagation needs s <= n (and s >= d at lambda = 0), got s = {s}, lambda = {lambda}"
        )));
    }
    let nodes = (s..=n).fold(0u128, |acc, t| acc.saturating_add(binomial(n, t)));
    check_subset_count(nodes)?;
    if lambda == 0.0 {
        gram(x, 0.0).cholesky()?;
    }

    let mut level: HashMap<Vec<usize>, f64> = HashMap::new();
    level.insert((0..n).collect(), 0.0);
    let mut worst: Option<(f64, f64, f64)> = None;
    for t in (s + 1..=n).rev() {
        let mut next: HashMap<Vec<usize>, f64> = HashMap::with_capacity(binomial(n, t - 1) as usize);
        // deterministic iteration order
        let mut parents: Vec<(Vec<usize>, f64)> = level.into_iter().collect();
        parents.sort_by(|a, b| a.0.cmp(&b.0));
        for (parent, lp) in parents {
            let g = gram_rows(x, parent.iter().copied(), lambda);
            let children: Vec<Vec<usize>> = (0..t)
                .map(|k| {
                    let mut c = parent.clone();
                    c.remove(k);
                    c
                })
                .collect();
            let edges: Vec<f64> = match g.cholesky() {
                Ok(chol) => {
                    let ld = chol.logdet();
                    let ratios: Vec<f64> = children
                        .iter()
                        .map(|c| (subset_logdet(x, c, lambda) - ld).exp())
                        .collect();
                    let sum: f64 = ratios.iter().sum();
                    let expected = t as f64 - d as f64 + lambda * chol.inverse().trace();
                    let dev = (sum - expected).abs();
                    if worst.is_none_or(|w| dev > w.0) {
                        worst = Some((dev, sum, expected));
                    }
                    ratios.iter().map(|r| (r / sum).ln()).collect()
                }
                // zero-volume node: uniform split
                Err(_) => vec![-(t as f64).ln(); t],
            };
            for (child, le) in children.into_iter().zip(edges) {
                if le == f64::NEG_INFINITY {
                    continue;
                }
                let entry = next.entry(child).or_insert(f64::NEG_INFINITY);
                *entry = log_add(*entry, lp + le);
            }
        }
        level = next;
    }
    let mut log_probs: BTreeMap<Vec<usize>, f64> =
        (0..n).combinations(s).map(|c| (c, f64::NEG_INFINITY)).collect();
    log_probs.extend(level);
    Ok(ExactSubsetDistribution {
        n,
        s,
        lambda,
        method: Method::DagPropagation,
        log_probs,
        log_normalizer: None,
        normalization_worst: worst.map(|(_, a, b)| (a, b)),
    })
}

/// Exact size-`s` law: closed form at `λ = 0`, DAG propagation otherwise.
pub fn exact_distribution(x: &Matrix, s: usize, lambda: f64) -> Result<ExactSubsetDistribution> {
    if lambda == 0.0 {
        closed_form_distribution(x, s)
    } else {
        dag_distribution(x, s, lambda)
    }
}

/// `d_λ = tr(X(XᵀX + λI)⁻¹Xᵀ) = Σ μᵢ/(μᵢ + λ)` over the eigenvalues of `XᵀX`.
pub fn d_lambda(x: &Matrix, lambda: f64) -> Result<f64> {
    let g = gram(x, 0.0);
    if lambda == 0.0 {
        g.cholesky()?;
        return Ok(x.cols() as f64);
    }
    Ok(linalg::symmetric_eigenvalues(g.as_matrix())
        .into_iter()
        .map(|mu| {
            let mu = mu.max(0.0);
            mu / (mu + lambda)
        })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdentityId {
    PseudoinvUnbiased,
    CovInverse,
    Frobenius,
    Covariance,
    ProjSquare,
    LossFactor,
    Marginals,
    Composition,
    RegInverseBound,
    Normalization,
    CauchyBinet,
}

impl IdentityId {
    pub const ALL: [IdentityId; 11] = [
        IdentityId::PseudoinvUnbiased,
        IdentityId::CovInverse,
        IdentityId::Frobenius,
        IdentityId::Covariance,
        IdentityId::ProjSquare,
        IdentityId::LossFactor,
        IdentityId::Marginals,
        IdentityId::Composition,
        IdentityId::RegInverseBound,
        IdentityId::Normalization,
        IdentityId::CauchyBinet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityId::PseudoinvUnbiased => "PSEUDOINV_UNBIASED",
            IdentityId::CovInverse => "COV_INVERSE",
            IdentityId::Frobenius => "FROBENIUS",
            IdentityId::Covariance => "COVARIANCE",
            IdentityId::ProjSquare => "PROJ_SQUARE",
            IdentityId::LossFactor => "LOSS_FACTOR",
            IdentityId::Marginals => "MARGINALS",
            IdentityId::Composition => "COMPOSITION",
            IdentityId::RegInverseBound => "REG_INVERSE_BOUND",
            IdentityId::Normalization => "NORMALIZATION",
            IdentityId::CauchyBinet => "CAUCHY_BINET",
        }
    }

    /// Whether the identity is defined only for unregularized sampling.
    fn unregularized_only(self) -> bool {
        !matches!(self, IdentityId::RegInverseBound | IdentityId::Normalization)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Equality,
    /// `lhs ⪯ rhs` in the PSD order (`lhs ≤ rhs` for scalars).
    Inequality,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub id: IdentityId,
    pub fixture: String,
    pub s: usize,
    pub lambda: f64,
    pub mode: CheckMode,
    pub lhs: Matrix,
    pub rhs: Matrix,
    pub max_abs_dev: f64,
    /// `max_abs_dev / max(max|rhs|, reference scale of the identity)`.
    pub max_rel_dev: f64,
    /// Smallest eigenvalue of `rhs - lhs` (inequality mode only).
    pub psd_margin: Option<f64>,
    pub passed: bool,
}

fn scalar(v: f64) -> Matrix {
    Matrix::new(1, 1, vec![v]).expect("finite scalar")
}

fn column(v: &[f64]) -> Matrix {
    Matrix::new(v.len(), 1, v.to_vec()).expect("finite column")
}

#[allow(clippy::too_many_arguments)]
fn make_report(
    id: IdentityId,
    fixture: &str,
    s: usize,
    lambda: f64,
    mode: CheckMode,
    lhs: Matrix,
    rhs: Matrix,
    scale: f64,
) -> IdentityReport {
    let diff = rhs.sub(&lhs);
    let max_abs_dev = diff.max_abs();
    let denom = rhs.max_abs().max(scale).max(f64::MIN_POSITIVE);
    let max_rel_dev = max_abs_dev / denom;
    let psd_margin = match mode {
        CheckMode::Equality => None,
        CheckMode::Inequality => Some(linalg::min_eigenvalue(&diff)),
    };
    let passed = match mode {
        CheckMode::Equality => max_rel_dev <= EQUALITY_TOL,
        CheckMode::Inequality => psd_margin.unwrap() >= -PSD_TOL,
    };
    IdentityReport {
        id,
        fixture: fixture.to_string(),
        s,
        lambda,
        mode,
        lhs,
        rhs,
        max_abs_dev,
        max_rel_dev,
        psd_margin,
        passed,
    }
}

/// `(I_S X)⁺ = (X_SᵀX_S)⁻¹(I_S X)ᵀ`, a `d×n` matrix with zero columns off `S`.
fn masked_pseudoinverse(x: &Matrix, subset: &[usize]) -> Result<Matrix> {
    let chol = gram_rows(x, subset.iter().copied(), 0.0).cholesky()?;
    let mut out_t = Matrix::zeros(x.rows(), x.cols());
    for &i in subset {
        out_t.row_mut(i).copy_from_slice(&chol.solve_vec(x.row(i)));
    }
    Ok(out_t.transpose())
}

fn pseudoinverse(x: &Matrix) -> Result<Matrix> {
    let all: Vec<usize> = (0..x.rows()).collect();
    masked_pseudoinverse(x, &all)
}

fn subset_inverse(x: &Matrix, subset: &[usize], lambda: f64) -> Result<Matrix> {
    gram_rows(x, subset.iter().copied(), lambda).inverse()
}

/// Generalized Cauchy-Binet: `Σ_{|S|=s} det(X_SᵀX_S)` against
/// `C(n-d, s-d)·det(XᵀX)`, compared in log space.
pub fn cauchy_binet_check(x: &Matrix, s: usize) -> Result<IdentityReport> {
    cauchy_binet_named(x, s, "input")
}

fn cauchy_binet_named(x: &Matrix, s: usize, fixture: &str) -> Result<IdentityReport> {
    let (n, d) = (x.rows(), x.cols());
    if s < d || s > n {
        return Err(Error::UnsupportedCombination(format!(
            "Cauchy-Binet needs d <= s <= n, got s = {s}"
        )));
    }
    check_subset_count(binomial(n, s))?;
    let lhs_log = log_sum_exp((0..n).combinations(s).map(|c| subset_logdet(x, &c, 0.0)));
    let rhs_log = ln_binomial(n - d, s - d) + subset_logdet(x, &(0..n).collect::<Vec<_>>(), 0.0);
    let (lhs, rhs) = (lhs_log.exp(), rhs_log.exp());
    let max_rel_dev = ((lhs_log - rhs_log).exp() - 1.0).abs();
    Ok(IdentityReport {
        id: IdentityId::CauchyBinet,
        fixture: fixture.to_string(),
        s,
        lambda: 0.0,
        mode: CheckMode::Equality,
        lhs: scalar(lhs),
        rhs: scalar(rhs),
        max_abs_dev: (lhs - rhs).abs(),
        max_rel_dev,
        psd_margin: None,
        passed: max_rel_dev <= EQUALITY_TOL,
    })
}

/// Evaluates one catalog identity on a fixture by exact enumeration.
pub fn verify_identity(id: IdentityId, fixture: &Fixture, s: usize, lambda: f64) -> Result<IdentityReport> {
    let x = &fixture.x;
    let (n, d) = (x.rows(), x.cols());
    let name = fixture.name.as_str();
    let label_mode = if fixture.general_position {
        CheckMode::Equality
    } else {
        CheckMode::Inequality
    };
    if lambda != 0.0 && id.unregularized_only() {
        return Err(Error::UnsupportedCombination(format!(
            "{} is defined for lambda = 0 only",
            id.name()
        )));
    }
    if matches!(id, IdentityId::ProjSquare | IdentityId::LossFactor) && s != d {
        return Err(Error::UnsupportedCombination(format!(
            "{} holds at s = d = {d} only, got s = {s}",
            id.name()
        )));
    }

    let factor = |s: usize| (n - d + 1) as f64 / (s - d + 1) as f64;

    match id {
        IdentityId::CauchyBinet => cauchy_binet_named(x, s, name),
        IdentityId::PseudoinvUnbiased => {
            let dist = closed_form_distribution(x, s)?;
            let lhs = dist.expectation(|c| masked_pseudoinverse(x, c))?;
            let rhs = pseudoinverse(x)?;
            Ok(make_report(id, name, s, 0.0, CheckMode::Equality, lhs, rhs, 0.0))
        }
        IdentityId::CovInverse => {
            let dist = closed_form_distribution(x, s)?;
            let lhs = dist.expectation(|c| subset_inverse(x, c, 0.0))?;
            let rhs = gram(x, 0.0).inverse()?.scale(factor(s));
            Ok(make_report(id, name, s, 0.0, label_mode, lhs, rhs, 0.0))
        }
        IdentityId::Frobenius => {
            let dist = closed_form_distribution(x, s)?;
            let lhs = dist.expectation(|c| Ok(scalar(masked_pseudoinverse(x, c)?.frobenius_sq())))?;
            let rhs = scalar(factor(s) * pseudoinverse(x)?.frobenius_sq());
            Ok(make_report(id, name, s, 0.0, label_mode, lhs, rhs, 0.0))
        }
        IdentityId::Covariance => {
            let dist = closed_form_distribution(x, s)?;
            let pinv = pseudoinverse(x)?;
            let lhs = dist.expectation(|c| {
                let centered = masked_pseudoinverse(x, c)?.sub(&pinv);
                Ok(centered.matmul(&centered.transpose()))
            })?;
            let base = pinv.matmul(&pinv.transpose());
            let rhs = base.scale((n - s) as f64 / (s - d + 1) as f64);
            let scale = base.max_abs();
            Ok(make_report(id, name, s, 0.0, label_mode, lhs, rhs, scale))
        }
        IdentityId::ProjSquare => {
            let dist = closed_form_distribution(x, s)?;
            let proj = x.matmul(&pseudoinverse(x)?);
            let second = dist.expectation(|c| {
                let a = x.matmul(&masked_pseudoinverse(x, c)?);
                Ok(a.transpose().matmul(&a))
            })?;
            let lhs = second.sub(&proj);
            let rhs = Matrix::identity(n).sub(&proj).scale(d as f64);
            Ok(make_report(id, name, s, 0.0, label_mode, lhs, rhs, 1.0))
        }
        IdentityId::LossFactor => {
            let p = fixture.problem().ok_or_else(|| {
                Error::UnsupportedCombination("LOSS_FACTOR needs responses".into())
            })?;
            let dist = closed_form_distribution(x, s)?;
            let lhs = dist.expectation(|c| Ok(scalar(subset_loss(&p, c)?)))?;
            let optimum = regression::least_squares(&p, 0.0)?;
            let rhs = scalar((d + 1) as f64 * regression::total_loss(&p, &optimum));
            let scale = 1e-12 * linalg::norm_sq(p.y());
            Ok(make_report(id, name, s, 0.0, label_mode, lhs, rhs, scale))
        }
        IdentityId::Marginals => {
            let dist = closed_form_distribution(x, s)?;
            let lhs = column(&dist.marginals());
            let rhs = column(&sampling::marginal_probabilities(x, s)?);
            Ok(make_report(id, name, s, 0.0, CheckMode::Equality, lhs, rhs, 1.0))
        }
        IdentityId::Composition => composition(fixture, s),
        IdentityId::RegInverseBound => {
            let dl = d_lambda(x, lambda)?;
            if (s as f64) < dl - 1e-12 {
                return Err(Error::UnsupportedCombination(format!(
                    "REG_INVERSE_BOUND needs s >= d_lambda = {dl}, got s = {s}"
                )));
            }
            let dist = dag_distribution(x, s, lambda)?;
            let lhs = dist.expectation(|c| subset_inverse(x, c, lambda))?;
            let rhs = gram(x, lambda)
                .inverse()?
                .scale((n as f64 - dl + 1.0) / (s as f64 - dl + 1.0));
            Ok(make_report(id, name, s, lambda, CheckMode::Inequality, lhs, rhs, 0.0))
        }
        IdentityId::Normalization => {
            let dist = dag_distribution(x, s, lambda)?;
            let (sum, expected) = dist.normalization_worst.unwrap_or((0.0, 0.0));
            Ok(make_report(
                id,
                name,
                s,
                lambda,
                CheckMode::Equality,
                scalar(sum),
                scalar(expected),
                1.0,
            ))
        }
    }
}

fn subset_loss(p: &RegressionProblem, subset: &[usize]) -> Result<f64> {
    let e = regression::solve_on_rows(p, subset, None, 0.0)?;
    Ok(regression::total_loss(p, &e))
}

/// Two-stage law `Σ_T P_X(T) P_{X_T}(S)` against `P_X(S)`, for every
/// intermediate size `t ∈ [s, n]`. Reports the worst `t`.
fn composition(fixture: &Fixture, s: usize) -> Result<IdentityReport> {
    let x = &fixture.x;
    let n = x.rows();
    let direct = closed_form_distribution(x, s)?;
    let target: Vec<f64> = direct.iter().map(|(_, p)| p).collect();
    let keys: Vec<Vec<usize>> = direct.iter().map(|(k, _)| k.to_vec()).collect();
    let position: HashMap<&[usize], usize> = keys.iter().enumerate().map(|(i, k)| (k.as_slice(), i)).collect();

    let mut worst: Option<(f64, Vec<f64>)> = None;
    for t in s..=n {
        let outer = closed_form_distribution(x, t)?;
        let mut two_stage = vec![0.0; keys.len()];
        for (outer_set, pt) in outer.support() {
            let sub = x.select_rows(outer_set);
            let inner = closed_form_distribution(&sub, s)?;
            for (local, ps) in inner.support() {
                let global: Vec<usize> = local.iter().map(|&k| outer_set[k]).collect();
                two_stage[position[global.as_slice()]] += pt * ps;
            }
        }
        let dev = two_stage
            .iter()
            .zip(&target)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if worst.as_ref().is_none_or(|w| dev > w.0) {
            worst = Some((dev, two_stage));
        }
    }
    let (_, lhs) = worst.expect("at least one intermediate size");
    Ok(make_report(
        IdentityId::Composition,
        &fixture.name,
        s,
        0.0,
        CheckMode::Equality,
        column(&lhs),
        column(&target),
        1.0,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct CellCount {
    /// A subset for the volume samplers, a single row for leverage sampling.
    pub cell: Vec<usize>,
    pub count: u64,
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalReport {
    pub algorithm: Algorithm,
    pub draws: u64,
    pub seed: u64,
    pub tv_distance: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    /// Draws landing in cells of exact probability zero.
    pub zero_probability_hits: u64,
    /// Largest `|p̂ᵢ - pᵢ| / SEᵢ` over per-row inclusion frequencies.
    pub marginal_max_z: f64,
    pub counts: Vec<CellCount>,
}

/// Runs `draws` independent replicates of the configured sampler (replicate
/// `k` uses stream `k` of `cfg.seed`) and compares the empirical law with the
/// exact one. Leverage sampling is compared per drawn row.
pub fn empirical_distribution_test(x: &Matrix, cfg: &SamplerConfig, draws: u64) -> Result<EmpiricalReport> {
    cfg.validate(x)?;
    let n = x.rows();
    let (cells, probs, counts, inclusion, exact_marginals, picks) = if cfg.algorithm == Algorithm::LeverageIid {
        let probs = sampling::leverage_distribution(x, cfg.lambda)?;
        let mut counts = vec![0u64; n];
        for k in 0..draws {
            let mut rng = replicate_rng(cfg.seed, k);
            let sample = sampling::leverage_iid_sample(x, cfg.size, cfg.lambda, cfg.seed, &mut rng)?;
            for &i in &sample.indices {
                counts[i] += 1;
            }
        }
        let cells: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let picks = draws * cfg.size as u64;
        (cells, probs.clone(), counts.clone(), counts, probs, picks)
    } else {
        let exact = exact_distribution(x, cfg.size, cfg.lambda)?;
        let cells: Vec<Vec<usize>> = exact.iter().map(|(k, _)| k.to_vec()).collect();
        let probs: Vec<f64> = exact.iter().map(|(_, p)| p).collect();
        let index: HashMap<Vec<usize>, usize> = cells.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let mut counts = vec![0u64; cells.len()];
        let mut inclusion = vec![0u64; n];
        for k in 0..draws {
            let mut rng = replicate_rng(cfg.seed, k);
            let sample = sampling::sample_with(x, cfg, &mut rng)?;
            counts[index[&sample.indices]] += 1;
            for &i in &sample.indices {
                inclusion[i] += 1;
            }
        }
        (cells, probs, counts, inclusion, exact.marginals(), draws)
    };

    let total = picks.max(1) as f64;
    let mut tv = 0.0;
    let mut chi = 0.0;
    let mut zero_hits = 0;
    let mut positive_cells: usize = 0;
    for (&c, &p) in counts.iter().zip(&probs) {
        tv += (c as f64 / total - p).abs();
        if p > 0.0 {
            positive_cells += 1;
            let e = total * p;
            chi += (c as f64 - e).powi(2) / e;
        } else {
            zero_hits += c;
        }
    }
    let trials = if cfg.algorithm == Algorithm::LeverageIid { total } else { draws.max(1) as f64 };
    let marginal_max_z = inclusion
        .iter()
        .zip(&exact_marginals)
        .map(|(&c, &p)| {
            let phat = c as f64 / trials;
            let se = (p * (1.0 - p) / trials).sqrt();
            if se > 0.0 {
                (phat - p).abs() / se
            } else if (phat - p).abs() > 1e-12 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(EmpiricalReport {
        algorithm: cfg.algorithm,
        draws,
        seed: cfg.seed,
        tv_distance: 0.5 * tv,
        chi_square: chi,
        degrees_of_freedom: positive_cells.saturating_sub(1),
        zero_probability_hits: zero_hits,
        marginal_max_z,
        counts: cells
            .into_iter()
            .zip(counts)
            .zip(probs)
            .map(|((cell, count), probability)| CellCount {
                cell,
                count,
                probability,
            })
            .collect(),
    })
}
