//! Dense linear algebra kernel.
//!
//! Row-major matrices, Gram matrices with an optional ridge term, Cholesky
//! factorization with log-determinants, SPD solves, leverage scores and the
//! Sherman-Morrison downdate used by the reverse iterative samplers.
//!
//! Everything here is small-dimensional in `d` and linear in `n`; no BLAS.

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cholesky pivots at or below this fraction of the largest diagonal entry
/// are treated as zero.
pub const PIVOT_RELATIVE_TOL: f64 = 1e-12;

/// Smallest admissible `h = 1 - xᵀZx` for a Sherman-Morrison downdate.
pub const DOWNDATE_TOL: f64 = 1e-12;

/// Relative asymmetry accepted by [`SpdMatrix::new`].
const SYMMETRY_TOL: f64 = 1e-12;

/// A dense real matrix stored row-major: `data[i * cols + j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix, rejecting empty shapes and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// All-zero matrix. Unlike [`Matrix::new`] this allows zero rows, which
    /// occurs for empty row subsets.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice of length `cols`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// `I_S X`: rows outside `indices` are zeroed, the shape is kept.
    pub fn mask_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for &i in indices {
            out.row_mut(i).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, c: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        axpy(c, &other.data, &mut self.data);
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Replaces `A` by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = m;
                self.data[j * n + i] = m;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Symmetric positive semi-definite matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpdMatrix {
    inner: Matrix,
}

impl SpdMatrix {
    /// Wraps a square matrix that is symmetric to within `1e-12` relative.
    /// Positive definiteness is only checked on factorization.
    pub fn new(mut a: Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch(format!(
                "SPD matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let n = a.rows();
        for i in 0..n {
            for j in i + 1..n {
                if (a.get(i, j) - a.get(j, i)).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidConfig(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        a.symmetrize();
        Ok(Self { inner: a })
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.inner)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        Ok(self.cholesky()?.inverse())
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factors a symmetric matrix; fails when a pivot drops to
    /// `PIVOT_RELATIVE_TOL` times the largest diagonal entry.
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        debug_assert_eq!(n, a.cols());
        let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0_f64, f64::max);
        let threshold = PIVOT_RELATIVE_TOL * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let pivot = a.get(j, j) - dot(lj, lj);
            if !(pivot > threshold) || max_diag <= 0.0 {
                return Err(Error::NotPositiveDefinite { column: j, pivot });
            }
            let ljj = pivot.sqrt();
            l.data[j * n + j] = ljj;
            for i in j + 1..n {
                let s = a.get(i, j) - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                l.data[i * n + j] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &Matrix {
        &self.l
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l.get(i, i).ln()).sum::<f64>()
    }

    /// `L⁻¹ b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = z[i] - dot(&row[..i], &z[..i]);
            z[i] = s / row[i];
        }
        z
    }

    /// `L⁻ᵀ z`, in place.
    fn backward(&self, z: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim());
        let mut z = self.forward(b);
        self.backward(&mut z);
        z
    }

    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.rows(), self.dim());
        let bt = b.transpose();
        let mut out_t = Matrix::zeros(b.cols(), b.rows());
        for c in 0..b.cols() {
            let x = self.solve_vec(bt.row(c));
            out_t.row_mut(c).copy_from_slice(&x);
        }
        out_t.transpose()
    }

    pub fn inverse(&self) -> Matrix {
        let mut inv = self.solve_mat(&Matrix::identity(self.dim()));
        inv.symmetrize();
        inv
    }

    /// Cheap lower estimate of the 2-norm condition number, `(max Lᵢᵢ / min Lᵢᵢ)²`.
    pub fn condition_estimate(&self) -> f64 {
        let diag: Vec<f64> = (0..self.dim()).map(|i| self.l.get(i, i)).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi / lo).powi(2)
    }
}

/// `XᵀX + λI`, symmetrized after accumulation.
pub fn gram(x: &Matrix, lambda: f64) -> SpdMatrix {
    gram_rows(x, 0..x.rows(), lambda)
}

/// `X_SᵀX_S + λI` for the rows yielded by `indices`, without copying `X_S`.
pub fn gram_rows(x: &Matrix, indices: impl IntoIterator<Item = usize>, lambda: f64) -> SpdMatrix {
    let d = x.cols();
    let mut g = Matrix::zeros(d, d);
    for i in indices {
        let r = x.row(i);
        for a in 0..d {
            let ra = r[a];
            if ra == 0.0 {
                continue;
            }
            // upper triangle only
            for b in a..d {
                g.data[a * d + b] += ra * r[b];
            }
        }
    }
    for a in 0..d {
        g.data[a * d + a] += lambda;
        for b in 0..a {
            g.data[a * d + b] = g.data[b * d + a];
        }
    }
    SpdMatrix { inner: g }
}

pub fn chol_logdet(a: &SpdMatrix) -> Result<f64> {
    Ok(a.cholesky()?.logdet())
}

/// `A⁻¹ B` via Cholesky.
pub fn solve_spd(a: &SpdMatrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows, expected {}",
            b.rows(),
            a.dim()
        )));
    }
    Ok(a.cholesky()?.solve_mat(b))
}

/// `A⁻¹ b` via Cholesky.
pub fn solve_spd_vec(a: &SpdMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.dim()
        )));
    }
    Ok(a.cholesky()?.solve_vec(b))
}

/// Ridge leverage scores `xᵢᵀ(XᵀX + λI)⁻¹xᵢ`; the ordinary ones at `λ = 0`.
pub fn leverage_scores(x: &Matrix, lambda: f64) -> Result<Vec<f64>> {
    let chol = gram(x, lambda).cholesky()?;
    Ok((0..x.rows())
        .map(|i| norm_sq(&chol.forward(x.row(i))))
        .collect())
}

/// `xᵀZx` for symmetric `Z`.
pub fn quad_form(z: &Matrix, x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for a in 0..d {
        let xa = x[a];
        if xa == 0.0 {
            continue;
        }
        acc += xa * dot(z.row(a), x);
    }
    acc
}

/// Removes row `x` from the inverse Gram matrix `Z = (X_SᵀX_S + λI)⁻¹`,
/// returning `Z + (Zx)(Zx)ᵀ/h` where `h = 1 - xᵀZx`.
pub fn sherman_morrison_downdate(z: &Matrix, x: &[f64], h: f64) -> Result<Matrix> {
    let mut out = z.clone();
    let zx = z.matvec(x);
    downdate_in_place(&mut out, &zx, h)?;
    Ok(out)
}

/// In-place form of [`sherman_morrison_downdate`] taking the precomputed `Zx`.
pub fn downdate_in_place(z: &mut Matrix, zx: &[f64], h: f64) -> Result<()> {
    if !(h > DOWNDATE_TOL) {
        return Err(Error::SingularDowndate { h });
    }
    let d = zx.len();
    let inv_h = 1.0 / h;
    for a in 0..d {
        let c = zx[a] * inv_h;
        if c == 0.0 {
            continue;
        }
        axpy(c, zx, z.row_mut(a));
    }
    z.symmetrize();
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(a: &Matrix) -> f64 {
    symmetric_eigenvalues(a)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    fn lcg_matrix(rows: usize, cols: usize, mut state: u64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push(((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0);
        }
        Matrix::new(rows, cols, data).unwrap()
    }

    /// Inverse by Gauss-Jordan elimination, independent of the Cholesky path.
    fn gauss_jordan_inverse(a: &Matrix) -> Matrix {
        let n = a.rows();
        let mut m = a.clone();
        let mut inv = Matrix::identity(n);
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m.get(i, c).abs().total_cmp(&m.get(j, c).abs()))
                .unwrap();
            for k in 0..n {
                let (t1, t2) = (m.get(c, k), m.get(p, k));
                m.set(c, k, t2);
                m.set(p, k, t1);
                let (t1, t2) = (inv.get(c, k), inv.get(p, k));
                inv.set(c, k, t2);
                inv.set(p, k, t1);
            }
            let piv = m.get(c, c);
            for k in 0..n {
                m.set(c, k, m.get(c, k) / piv);
                inv.set(c, k, inv.get(c, k) / piv);
            }
            for r in 0..n {
                if r != c {
                    let f = m.get(r, c);
                    for k in 0..n {
                        m.set(r, k, m.get(r, k) - f * m.get(c, k));
                        inv.set(r, k, inv.get(r, k) - f * inv.get(c, k));
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn gram_examples() {
        let x = degenerate();
        let g = gram(&x, 0.0);
        assert_eq!(g.as_matrix().as_slice(), &[3.0, 2.0, 2.0, 2.0]);
        let g1 = gram(&x, 1.0);
        assert_eq!(g1.as_matrix().as_slice(), &[4.0, 2.0, 2.0, 3.0]);
        assert_eq!(gram(&Matrix::identity(2), 0.0).into_matrix(), Matrix::identity(2));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(chol_logdet(&gram(&Matrix::identity(3), 0.0)).unwrap(), 0.0);
        let a = SpdMatrix::new(Matrix::from_rows(&[vec![3.0, 2.0], vec![2.0, 2.0]]).unwrap()).unwrap();
        assert!((chol_logdet(&a).unwrap() - 2f64.ln()).abs() < 1e-14);
        let eps: f64 = 0.1;
        let a = SpdMatrix::new(Matrix::from_diagonal(&[eps * eps, 1.0])).unwrap();
        assert!((chol_logdet(&a).unwrap() - 1e-2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = SpdMatrix::new(Matrix::from_rows(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap()).unwrap();
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { column: 1, .. })));
        let z = SpdMatrix::new(Matrix::zeros(2, 2)).unwrap();
        assert!(z.cholesky().is_err());
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(SpdMatrix::new(a).is_err());
    }

    #[test]
    fn solve_examples() {
        let a = SpdMatrix::new(Matrix::from_rows(&[vec![3.0, 2.0], vec![2.0, 2.0]]).unwrap()).unwrap();
        let inv = solve_spd(&a, &Matrix::identity(2)).unwrap();
        let expected = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.5]]).unwrap();
        assert!(close(&inv, &expected, 1e-14));
        assert!(close(&a.as_matrix().matmul(&inv), &Matrix::identity(2), 1e-14));

        let two = SpdMatrix::new(Matrix::identity(2).scale(2.0)).unwrap();
        let v = solve_spd_vec(&two, &[4.0, 6.0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        let id = SpdMatrix::new(Matrix::identity(3)).unwrap();
        assert_eq!(solve_spd_vec(&id, &[1.0, -2.0, 5.0]).unwrap(), vec![1.0, -2.0, 5.0]);
    }

    #[test]
    fn solve_residual_is_small() {
        let x = lcg_matrix(20, 4, 3);
        let a = gram(&x, 0.0);
        let b = lcg_matrix(4, 3, 9);
        let sol = solve_spd(&a, &b).unwrap();
        let resid = a.as_matrix().matmul(&sol).sub(&b);
        assert!(resid.frobenius_sq().sqrt() <= 1e-10 * b.frobenius_sq().sqrt());
    }

    #[test]
    fn leverage_examples() {
        let id = leverage_scores(&Matrix::identity(4), 0.0).unwrap();
        assert!(id.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        let ones = leverage_scores(&Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(), 0.0).unwrap();
        assert!(ones.iter().all(|&l| (l - 0.5).abs() < 1e-14));
        let l = leverage_scores(&degenerate(), 0.0).unwrap();
        for (a, b) in l.iter().zip([0.5, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((l.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn leverage_trace_equals_d() {
        for seed in 0..20 {
            let x = lcg_matrix(15, 4, seed);
            let s: f64 = leverage_scores(&x, 0.0).unwrap().iter().sum();
            assert!((s - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_equations_orthogonality() {
        let x = lcg_matrix(12, 3, 5);
        let y: Vec<f64> = lcg_matrix(12, 1, 6).as_slice().to_vec();
        let xty = x.tr_matvec(&y);
        let w = solve_spd_vec(&gram(&x, 0.0), &xty).unwrap();
        let resid: Vec<f64> = x.matvec(&w).iter().zip(&y).map(|(a, b)| a - b).collect();
        let ortho = x.tr_matvec(&resid);
        assert!(norm_sq(&ortho).sqrt() <= 1e-9 * norm_sq(&xty).sqrt());
    }

    #[test]
    fn downdate_zero_vector_is_identity() {
        let z = gram(&lcg_matrix(6, 3, 1), 0.0).inverse().unwrap();
        let out = sherman_morrison_downdate(&z, &[0.0; 3], 1.0).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn downdate_single_row_matches_scratch() {
        let x = lcg_matrix(6, 3, 11);
        let z = gram(&x, 0.0).inverse().unwrap();
        let h = 1.0 - quad_form(&z, x.row(0));
        let down = sherman_morrison_downdate(&z, x.row(0), h).unwrap();
        let scratch = gauss_jordan_inverse(gram_rows(&x, 1..6, 0.0).as_matrix());
        assert!(close(&down, &scratch, 1e-10));
    }

    #[test]
    fn chained_downdates_match_scratch() {
        let x = lcg_matrix(8, 3, 21);
        let mut z = gram(&x, 0.0).inverse().unwrap();
        let mut active: Vec<usize> = (0..8).collect();
        for &r in &[4usize, 0, 6] {
            let h = 1.0 - quad_form(&z, x.row(r));
            z = sherman_morrison_downdate(&z, x.row(r), h).unwrap();
            active.retain(|&i| i != r);
        }
        let scratch = gauss_jordan_inverse(gram_rows(&x, active.iter().copied(), 0.0).as_matrix());
        assert!(close(&z, &scratch, 1e-9));
    }

    #[test]
    fn downdate_rejects_singular() {
        let z = Matrix::identity(2);
        assert!(matches!(
            sherman_morrison_downdate(&z, &[1.0, 0.0], 0.0),
            Err(Error::SingularDowndate { .. })
        ));
    }

    #[test]
    fn sylvester_ratio() {
        let x = lcg_matrix(9, 3, 17);
        let full = chol_logdet(&gram(&x, 0.0)).unwrap();
        let z = gram(&x, 0.0).inverse().unwrap();
        for i in 0..9 {
            let minus = chol_logdet(&gram_rows(&x, (0..9).filter(|&j| j != i), 0.0)).unwrap();
            let h = 1.0 - quad_form(&z, x.row(i));
            assert!(((minus - full).exp() - h).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let ev = symmetric_eigenvalues(&Matrix::from_diagonal(&[3.0, -1.0, 2.0]));
        assert_eq!(ev.len(), 3);
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);
    }
}
