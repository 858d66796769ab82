//! Reusable test matrices.
//!
//! Each fixture carries a general-position label; the identity checker uses
//! it to choose between equality and PSD-inequality mode.

use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;
use crate::regression::{NoiseModel, RegressionProblem};
use crate::sampling::rng_from_seed;

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub x: Matrix,
    pub y: Option<Vec<f64>>,
    /// Every d×d row submatrix is nonsingular.
    pub general_position: bool,
}

impl Fixture {
    pub fn problem(&self) -> Option<RegressionProblem> {
        self.y
            .as_ref()
            .map(|y| RegressionProblem::new(self.x.clone(), y.clone()).expect("fixture shapes agree"))
    }
}

/// The 3×2 matrix with two identical rows, `y = (1, 0, 0)`.
pub fn degenerate() -> Fixture {
    Fixture {
        name: "degenerate-3x2".into(),
        x: Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        y: Some(vec![1.0, 0.0, 0.0]),
        general_position: false,
    }
}

/// [`degenerate`] with the first row moved to `(1, 1 + ε)`.
pub fn perturbed(eps: f64) -> Fixture {
    Fixture {
        name: format!("perturbed-3x2-eps{eps}"),
        x: Matrix::from_rows(&[vec![1.0, 1.0 + eps], vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        y: Some(vec![1.0, 0.0, 0.0]),
        general_position: true,
    }
}

/// The `d + 1` corners of a regular simplex in `R^d` centered at the origin,
/// with every response equal to `alpha`.
///
/// Corner `k` has coordinates `H[k][j]` where column `j` is the normalized
/// Helmert contrast `(1, …, 1, -(j+1), 0, …)/√((j+1)(j+2))`.
pub fn centered_simplex(d: usize, alpha: f64) -> Fixture {
    let mut x = Matrix::zeros(d + 1, d);
    for j in 0..d {
        let m = (j + 1) as f64;
        let norm = (m * (m + 1.0)).sqrt();
        for k in 0..=j {
            x.set(k, j, 1.0 / norm);
        }
        x.set(j + 1, j, -m / norm);
    }
    Fixture {
        name: format!("centered-simplex-d{d}"),
        x,
        y: Some(vec![alpha; d + 1]),
        general_position: true,
    }
}

/// `X = [I, …, I]ᵀ` with `copies` stacked `d×d` identities (`n = copies·d`).
pub fn block_identity(d: usize, copies: usize) -> Matrix {
    let mut x = Matrix::zeros(d * copies, d);
    for c in 0..copies {
        for j in 0..d {
            x.set(c * d + j, j, 1.0);
        }
    }
    x
}

/// Noise model with `w̃ = (aσ, …, aσ)` for [`block_identity`].
pub fn block_identity_model(d: usize, a: f64, sigma: f64) -> NoiseModel {
    NoiseModel::new(vec![a * sigma; d], sigma)
}

/// Seeded `n×d` matrix of standard normal entries (general position a.s.).
pub fn gaussian(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::new(n, d, data).unwrap()
}

/// Gaussian `X` with Gaussian responses drawn from the same stream.
pub fn gaussian_fixture(n: usize, d: usize, seed: u64) -> Fixture {
    let mut rng = rng_from_seed(seed);
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Fixture {
        name: format!("gaussian-{n}x{d}-seed{seed}"),
        x: Matrix::new(n, d, data).unwrap(),
        y: Some(y),
        general_position: true,
    }
}

/// `n` unit rows of `R²` at angles `πk/n`, `k = 0..n`, with standard normal
/// responses drawn from `seed`. Any two rows are at least `π/n` apart in
/// direction, so no size-2 subproblem is close to singular.
pub fn fan(n: usize, seed: u64) -> Fixture {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / n as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let mut rng = rng_from_seed(seed);
    Fixture {
        name: format!("fan-{n}-seed{seed}"),
        x: Matrix::from_rows(&rows).unwrap(),
        y: Some((0..n).map(|_| StandardNormal.sample(&mut rng)).collect()),
        general_position: true,
    }
}
