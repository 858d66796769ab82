//! Subsampled least-squares and ridge estimators, losses, and the noise
//! model used for the prediction-error bounds.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, axpy, dot, gram_rows, Matrix, SpdMatrix};
use crate::sampling::SubsetSample;

/// Gram condition estimates above this are flagged on the estimator.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Design matrix `X` (n×d) with responses `y` (length n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionProblem {
    x: Matrix,
    y: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} responses",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite response".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Total square loss `L(w) = ‖Xw - y‖²`.
    pub fn loss(&self, w: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| {
                let r = dot(self.x.row(i), w) - self.y[i];
                r * r
            })
            .sum()
    }

    /// Square loss on row `i`.
    pub fn pointwise_loss(&self, w: &[f64], i: usize) -> f64 {
        let r = dot(self.x.row(i), w) - self.y[i];
        r * r
    }

    /// Predictions `Xw`.
    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        self.x.matvec(w)
    }
}

/// A weight vector together with how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub w: Vec<f64>,
    pub lambda: f64,
    pub subset: Option<SubsetSample>,
    /// `(max Lᵢᵢ / min Lᵢᵢ)²` of the Cholesky factor of the solved system.
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub w_true: Vec<f64>,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(w_true: Vec<f64>, sigma: f64) -> Self {
        assert!(sigma >= 0.0, "noise level must be non-negative");
        Self { w_true, sigma }
    }
}

/// Minimizer of `Σ_k (ω_k (x_kᵀw - y_k))² + λ‖w‖²` over the listed rows,
/// where `ω` are optional per-entry weights. Rows may repeat.
pub fn solve_on_rows(p: &RegressionProblem, rows: &[usize], weights: Option<&[f64]>, lambda: f64) -> Result<Estimator> {
    let d = p.d();
    let (g, rhs) = match weights {
        None => {
            let g = gram_rows(p.x(), rows.iter().copied(), lambda);
            let mut rhs = vec![0.0; d];
            for &i in rows {
                axpy(p.y()[i], p.x().row(i), &mut rhs);
            }
            (g, rhs)
        }
        Some(omega) => {
            if omega.len() != rows.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} rows",
                    omega.len(),
                    rows.len()
                )));
            }
            let mut g = Matrix::zeros(d, d);
            let mut rhs = vec![0.0; d];
            for (&i, &om) in rows.iter().zip(omega) {
                let r = p.x().row(i);
                let om2 = om * om;
                for a in 0..d {
                    axpy(om2 * r[a], r, g.row_mut(a));
                }
                axpy(om2 * p.y()[i], r, &mut rhs);
            }
            for a in 0..d {
                g.set(a, a, g.get(a, a) + lambda);
            }
            g.symmetrize();
            (SpdMatrix::new(g)?, rhs)
        }
    };
    let chol = g.cholesky().map_err(|_| Error::RankDeficientSubset)?;
    let condition_estimate = chol.condition_estimate();
    Ok(Estimator {
        w: chol.solve_vec(&rhs),
        lambda,
        subset: None,
        condition_estimate,
        ill_conditioned: condition_estimate > ILL_CONDITIONED,
    })
}

/// Full-data least squares (`λ = 0`) or ridge estimator.
pub fn least_squares(p: &RegressionProblem, lambda: f64) -> Result<Estimator> {
    let rows: Vec<usize> = (0..p.n()).collect();
    solve_on_rows(p, &rows, None, lambda)
}

/// `w*_λ(S) = (X_SᵀX_S + λI)⁻¹X_Sᵀy_S`. Leverage multisets are solved on
/// their importance-reweighted rows; volume samples are used as is.
pub fn solve_subproblem(p: &RegressionProblem, sample: &SubsetSample, lambda: f64) -> Result<Estimator> {
    if let Some(&bad) = sample.indices.iter().find(|&&i| i >= p.n()) {
        return Err(Error::DimensionMismatch(format!("index {bad} out of range for n = {}", p.n())));
    }
    let mut est = solve_on_rows(p, &sample.indices, sample.importance_weights.as_deref(), lambda)?;
    est.subset = Some(sample.clone());
    Ok(est)
}

/// `L(w) = ‖Xw - y‖²` over all rows.
pub fn total_loss(p: &RegressionProblem, e: &Estimator) -> f64 {
    p.loss(&e.w)
}

/// `(1/n)‖Xw - y‖²`.
pub fn normalized_loss(p: &RegressionProblem, e: &Estimator) -> f64 {
    p.loss(&e.w) / p.n() as f64
}

/// Both sides of the leave-one-out identity, `(L(w*₋ᵢ) - L(w*), lᵢ·ℓᵢ(w*₋ᵢ))`,
/// where `w*₋ᵢ` solves the problem with row `i` left out.
///
/// The loss increase is evaluated as `2δᵀr + ‖δ‖²` with `r = Xw* - y` and
/// `δ = X(w*₋ᵢ - w*)`, the shift `w*₋ᵢ - w*` being solved for directly from
/// the residuals. Subtracting the two losses instead loses most digits when
/// the increase is small.
pub fn loo_identity_terms(p: &RegressionProblem, i: usize) -> Result<(f64, f64)> {
    let full = least_squares(p, 0.0).map_err(|_| Error::RankDeficientSubset)?;
    let r: Vec<f64> = p.predict(&full.w).iter().zip(p.y()).map(|(a, b)| a - b).collect();
    let rest: Vec<usize> = (0..p.n()).filter(|&j| j != i).collect();
    let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
    let shift_problem = RegressionProblem::new(p.x().clone(), neg_r)?;
    let shift = solve_on_rows(&shift_problem, &rest, None, 0.0)?;
    let delta = p.x().matvec(&shift.w);
    let increase = 2.0 * dot(&delta, &r) + linalg::norm_sq(&delta);
    let lev = linalg::leverage_scores(p.x(), 0.0)?[i];
    let loo_residual = r[i] + delta[i];
    Ok((increase, lev * loo_residual * loo_residual))
}

/// `|[L(w*₋ᵢ) - L(w*)] - lᵢ·ℓᵢ(w*₋ᵢ)|`.
pub fn loo_identity_residual(p: &RegressionProblem, i: usize) -> Result<f64> {
    let (lhs, rhs) = loo_identity_terms(p, i)?;
    Ok((lhs - rhs).abs())
}

/// Mean of the subproblem estimators `(1/k) Σ w(S_j)`.
pub fn averaged_estimator(p: &RegressionProblem, samples: &[SubsetSample], lambda: f64) -> Result<Estimator> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("cannot average zero estimators".into()));
    }
    let mut w = vec![0.0; p.d()];
    let mut worst = 0.0_f64;
    for s in samples {
        let e = solve_subproblem(p, s, lambda)?;
        axpy(1.0, &e.w, &mut w);
        worst = worst.max(e.condition_estimate);
    }
    let k = samples.len() as f64;
    w.iter_mut().for_each(|v| *v /= k);
    Ok(Estimator {
        w,
        lambda,
        subset: None,
        condition_estimate: worst,
        ill_conditioned: worst > ILL_CONDITIONED,
    })
}

/// Mean squared prediction error `(1/n)‖X(w - w̃)‖²`.
pub fn mspe(p: &RegressionProblem, e: &Estimator, model: &NoiseModel) -> f64 {
    let diff: Vec<f64> = e.w.iter().zip(&model.w_true).map(|(a, b)| a - b).collect();
    linalg::norm_sq(&p.x().matvec(&diff)) / p.n() as f64
}

/// Mean squared error `‖w - w̃‖²`.
pub fn mse(e: &Estimator, model: &NoiseModel) -> f64 {
    e.w.iter().zip(&model.w_true).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `y = Xw̃ + ξ` with `ξᵢ ~ N(0, σ²)` i.i.d.
pub fn generate_noisy_problem<R: Rng + ?Sized>(x: &Matrix, model: &NoiseModel, rng: &mut R) -> RegressionProblem {
    assert_eq!(x.cols(), model.w_true.len(), "noise model dimension");
    let mut y = x.matvec(&model.w_true);
    if model.sigma > 0.0 {
        for yi in &mut y {
            let z: f64 = StandardNormal.sample(rng);
            *yi += model.sigma * z;
        }
    }
    RegressionProblem::new(x.clone(), y).expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sampling::rng_from_seed;

    fn subset(idx: &[usize]) -> SubsetSample {
        SubsetSample::from_indices(idx.to_vec(), 0.0)
    }

    #[test]
    fn degenerate_subproblems() {
        let p = fixtures::degenerate().problem().unwrap();
        let w12 = solve_subproblem(&p, &subset(&[1, 2]), 0.0).unwrap();
        assert!(w12.w.iter().all(|v| v.abs() < 1e-14));
        let w02 = solve_subproblem(&p, &subset(&[0, 2]), 0.0).unwrap();
        assert!((w02.w[0]).abs() < 1e-14 && (w02.w[1] - 1.0).abs() < 1e-14);
        let full = least_squares(&p, 0.0).unwrap();
        assert!(full.w[0].abs() < 1e-14 && (full.w[1] - 0.5).abs() < 1e-14);
        assert!(matches!(
            solve_subproblem(&p, &subset(&[0, 1]), 0.0),
            Err(Error::RankDeficientSubset)
        ));
    }

    #[test]
    fn degenerate_losses() {
        let p = fixtures::degenerate().problem().unwrap();
        let full = least_squares(&p, 0.0).unwrap();
        assert!((total_loss(&p, &full) - 0.5).abs() < 1e-14);
        assert_eq!(p.loss(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn perturbed_optimum_loss() {
        let eps = 0.1;
        let p = fixtures::perturbed(eps).problem().unwrap();
        let full = least_squares(&p, 0.0).unwrap();
        let expected = 1.0 / (2.0 * (1.0 + eps + eps * eps));
        assert!((total_loss(&p, &full) - expected).abs() < 1e-13);
    }

    #[test]
    fn consistent_system_is_recovered() {
        let x = fixtures::gaussian(9, 3, 2);
        let w0 = vec![0.5, -1.0, 2.0];
        let p = RegressionProblem::new(x.clone(), x.matvec(&w0)).unwrap();
        let e = solve_subproblem(&p, &subset(&[1, 4, 7]), 0.0).unwrap();
        for (a, b) in e.w.iter().zip(&w0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ridge_subproblem_matches_normal_equations() {
        let f = fixtures::gaussian_fixture(10, 3, 4);
        let p = f.problem().unwrap();
        let idx = [0, 2, 5];
        let lambda = 0.7;
        let e = solve_subproblem(&p, &subset(&idx), lambda).unwrap();
        // gradient of ‖X_S w − y_S‖² + λ‖w‖² vanishes
        let mut grad: Vec<f64> = e.w.iter().map(|v| lambda * v).collect();
        for &i in &idx {
            let r = dot(p.x().row(i), &e.w) - p.y()[i];
            axpy(r, p.x().row(i), &mut grad);
        }
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn importance_weights_rescale_rows() {
        let f = fixtures::gaussian_fixture(8, 2, 6);
        let p = f.problem().unwrap();
        let mut s = subset(&[1, 1, 3, 6]);
        s.multiset = true;
        s.importance_weights = Some(vec![2.0, 2.0, 0.5, 1.0]);
        let e = solve_subproblem(&p, &s, 0.0).unwrap();
        // same as explicitly scaled rows and responses
        let rows: Vec<Vec<f64>> = s
            .indices
            .iter()
            .zip(s.importance_weights.as_ref().unwrap())
            .map(|(&i, &w)| p.x().row(i).iter().map(|v| v * w).collect())
            .collect();
        let ys: Vec<f64> = s
            .indices
            .iter()
            .zip(s.importance_weights.as_ref().unwrap())
            .map(|(&i, &w)| p.y()[i] * w)
            .collect();
        let scaled = RegressionProblem::new(Matrix::from_rows(&rows).unwrap(), ys).unwrap();
        let direct = least_squares(&scaled, 0.0).unwrap();
        for (a, b) in e.w.iter().zip(&direct.w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loo_examples() {
        let x = fixtures::gaussian(10, 3, 1);
        let w0 = vec![1.0, 2.0, 3.0];
        let p = RegressionProblem::new(x.clone(), x.matvec(&w0)).unwrap();
        assert!(loo_identity_residual(&p, 4).unwrap() < 1e-12);

        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| x.row(i).to_vec()).collect();
        rows[3] = vec![0.0; 3];
        let f = fixtures::gaussian_fixture(10, 1, 3);
        let p = RegressionProblem::new(Matrix::from_rows(&rows).unwrap(), f.y.unwrap()).unwrap();
        assert!(loo_identity_residual(&p, 3).unwrap() < 1e-12);
    }

    #[test]
    fn loo_increase_matches_loss_difference() {
        let f = fixtures::gaussian_fixture(9, 2, 4);
        let p = f.problem().unwrap();
        for i in 0..9 {
            let (lhs, rhs) = loo_identity_terms(&p, i).unwrap();
            let rest: Vec<usize> = (0..9).filter(|&j| j != i).collect();
            let loo = solve_on_rows(&p, &rest, None, 0.0).unwrap();
            let full = least_squares(&p, 0.0).unwrap();
            assert!((p.loss(&loo.w) - p.loss(&full.w) - lhs).abs() < 1e-12 * p.loss(&loo.w));
            assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        }
    }

    #[test]
    fn averaging_trivial_cases() {
        let p = fixtures::gaussian_fixture(8, 2, 9).problem().unwrap();
        let s = subset(&[0, 3, 5]);
        let one = solve_subproblem(&p, &s, 0.0).unwrap();
        let avg1 = averaged_estimator(&p, std::slice::from_ref(&s), 0.0).unwrap();
        assert_eq!(one.w, avg1.w);
        let avg3 = averaged_estimator(&p, &[s.clone(), s.clone(), s], 0.0).unwrap();
        for (a, b) in one.w.iter().zip(&avg3.w) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(averaged_estimator(&p, &[], 0.0).is_err());
    }

    #[test]
    fn mspe_examples() {
        let x = Matrix::identity(4);
        let model = NoiseModel::new(vec![1.0, 0.0, 0.0, 2.0], 0.5);
        let p = RegressionProblem::new(x, vec![0.0; 4]).unwrap();
        let exact = Estimator {
            w: model.w_true.clone(),
            lambda: 0.0,
            subset: None,
            condition_estimate: 1.0,
            ill_conditioned: false,
        };
        assert_eq!(mspe(&p, &exact, &model), 0.0);
        assert_eq!(mse(&exact, &model), 0.0);
        let off = Estimator {
            w: vec![2.0, 1.0, 0.0, 2.0],
            ..exact
        };
        assert!((mspe(&p, &off, &model) - 2.0 / 4.0).abs() < 1e-15);
        assert!((mse(&off, &model) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_generation_is_exact() {
        let x = fixtures::gaussian(5, 2, 0);
        let model = NoiseModel::new(vec![1.0, -1.0], 0.0);
        let p = generate_noisy_problem(&x, &model, &mut rng_from_seed(1));
        assert_eq!(p.y(), x.matvec(&model.w_true).as_slice());
    }

    #[test]
    fn noise_moments() {
        let n = 100_000;
        let x = Matrix::new(n, 1, vec![0.0; n]).unwrap();
        let sigma = 2.0;
        let model = NoiseModel::new(vec![0.0], sigma);
        let p = generate_noisy_problem(&x, &model, &mut rng_from_seed(77));
        let mean = p.y().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt());
        let var = p.y().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(RegressionProblem::new(Matrix::identity(2), vec![1.0]).is_err());
    }
}
