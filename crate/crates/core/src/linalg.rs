//! Dense row-major linear algebra in double precision.
//!
//! Only what the recurrent cells and the Cayley machinery need: products,
//! transposes, rank-one accumulation, an LU inverse and a power-iteration
//! spectral norm. Sizes at desk scale stay well below 256, so everything is
//! plain loops over contiguous rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut, Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Default tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Default iteration cap for [`spectral_norm`].
pub const SPECTRAL_MAX_ITER: usize = 1000;

const SPECTRAL_SEED: u64 = 0x5eed_0f5b_ec00;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "MatrixRepr", into = "MatrixRepr")
)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::from_vec(r.rows, r.cols, r.data)
    }
}

#[cfg(feature = "serde")]
impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} entries for {rows}x{cols}", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input, so it is
    /// meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
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

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a *= s);
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += s * b);
        Ok(())
    }

    /// Multiplies column `j` by `d[j]`, i.e. `self · diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Result<Matrix> {
        if d.len() != self.cols {
            return Err(Error::shape(self.cols, d.len()));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (x, s) in out.row_mut(i).iter_mut().zip(d) {
                *x *= s;
            }
        }
        Ok(out)
    }

    /// `out += self · x`.
    #[inline]
    pub fn gemv_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · x`.
    #[inline]
    pub fn gemv_t_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, r) in out.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::shape(self.cols, x.len()));
        }
        let mut out = vec![0.0; self.rows];
        self.gemv_add(x, &mut out);
        Ok(Vector::from(out))
    }

    /// `self += a · bᵀ`.
    #[inline]
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, bj) in row.iter_mut().zip(b) {
                *r += ai * bj;
            }
        }
    }

    pub fn fro_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `max |m_ij + m_ji|`, zero exactly when the matrix is skew-symmetric.
    pub fn skew_residual(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] + self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense vector; dereferences to `[f64]`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(transparent)
)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(dot(&self.0, &self.0))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            format!("inner dimension {}", a.cols),
            format!("{}", b.rows),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::Numeric("matmul".into()));
    }
    Ok(out)
}

/// LU factorization with partial pivoting, stored in place.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(m: &Matrix) -> Result<Lu> {
        if !m.is_square() {
            return Err(Error::shape("square matrix", format!("{}x{}", m.rows, m.cols)));
        }
        let n = m.rows;
        let scale = m.inf_norm();
        let threshold = 1e-14 * scale;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot.partial_cmp(&threshold) != Some(core::cmp::Ordering::Greater) {
                return Err(Error::Singular { pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv_pivot = 1.0 / lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] * inv_pivot;
                lu[(i, k)] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= factor * v;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    /// Solves `m x = e_col` for every unit vector and assembles the inverse.
    fn inverse(&self) -> Matrix {
        let n = self.lu.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut x = vec![0.0; n];
        for col in 0..n {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = if self.perm[i] == col { 1.0 } else { 0.0 };
            }
            for i in 0..n {
                let row = self.lu.row(i);
                let s: f64 = (0..i).map(|j| row[j] * x[j]).sum();
                x[i] -= s;
            }
            for i in (0..n).rev() {
                let row = self.lu.row(i);
                let s: f64 = (i + 1..n).map(|j| row[j] * x[j]).sum();
                x[i] = (x[i] - s) / row[i];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        inv
    }
}

/// Inverse through LU factorization with partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot drops below `1e-14·‖m‖∞`.
pub fn exact_inverse(m: &Matrix) -> Result<Matrix> {
    let inv = Lu::factor(m)?.inverse();
    if !inv.is_finite() {
        return Err(Error::Numeric("exact_inverse".into()));
    }
    Ok(inv)
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// The start vector is derived from a fixed seed, so the result is
/// reproducible. Convergence is declared when the eigen-residual
/// `‖mᵀm x − ρ x‖` falls below `tol · ρ`, which places `ρ = σ²` within a
/// relative `tol` of an eigenvalue of `mᵀm`; otherwise
/// [`Error::NoConvergence`] carries the last estimate.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    if !m.is_finite() {
        return Err(Error::Numeric("spectral_norm input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SPECTRAL_SEED);
    let mut x: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut y = vec![0.0; rows];
    let mut z = vec![0.0; cols];
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        y.iter_mut().for_each(|v| *v = 0.0);
        m.gemv_add(&x, &mut y);
        let rho = dot(&y, &y);
        z.iter_mut().for_each(|v| *v = 0.0);
        m.gemv_t_add(&y, &mut z);
        let residual = libm::sqrt(z.iter().zip(&x).map(|(a, b)| (a - rho * b) * (a - rho * b)).sum());
        estimate = libm::sqrt(rho);
        if residual <= tol * rho {
            return Ok(estimate);
        }
        x.copy_from_slice(&z);
        if normalize(&mut x) == 0.0 {
            // start vector fell into the null space; re-seed
            x.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            normalize(&mut x);
        }
    }
    Err(Error::NoConvergence {
        estimate,
        iterations: max_iter,
    })
}

/// [`spectral_norm`] that falls back to the last estimate when the iteration
/// cap is reached. Used for monitoring, where a slightly loose value is fine.
pub fn spectral_norm_estimate(m: &Matrix, tol: f64) -> Result<f64> {
    match spectral_norm(m, tol, SPECTRAL_MAX_ITER) {
        Err(Error::NoConvergence { estimate, .. }) => Ok(estimate),
        other => other,
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, in diagonal
/// order. Accurate to a few ulps of the largest eigenvalue.
pub fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(Error::shape(format!("{0}x{0}", s.rows()), format!("{}x{}", s.rows(), s.cols())));
    }
    let n = s.rows();
    let mut a = s.clone();
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    diag += a[(i, i)] * a[(i, i)];
                } else {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off <= 1e-30 * f64::max(diag, f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[(i, i)]).collect())
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Largest singular value from the full eigen-decomposition of `mᵀm`.
/// Cubic cost; used where power iteration stalls on nearly tied values.
pub fn spectral_norm_exact(m: &Matrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::Numeric("spectral_norm input".into()));
    }
    let gram = m.transpose().matmul(m)?;
    let top = symmetric_eigenvalues(&gram)?.into_iter().fold(0.0, f64::max);
    Ok(libm::sqrt(top))
}

/// [`spectral_norm`] that switches to [`spectral_norm_exact`] when the
/// iteration cap is reached, so the result always meets `tol`.
pub fn spectral_norm_tight(m: &Matrix, tol: f64) -> Result<f64> {
    match spectral_norm(m, tol, SPECTRAL_MAX_ITER) {
        Err(Error::NoConvergence { .. }) => spectral_norm_exact(m),
        other => other,
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = libm::sqrt(dot(x, x));
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// `‖mᵀm − I‖_F`, the orthogonality drift of a square matrix.
pub fn fro_dist_identity(m: &Matrix) -> f64 {
    assert!(m.is_square(), "fro_dist_identity needs a square matrix");
    let n = m.rows;
    let mut acc = 0.0;
    // (mᵀm)_ij = Σ_k m_ki m_kj
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..n {
                s += m.data[k * n + i] * m.data[k * n + j];
            }
            if i == j {
                s -= 1.0;
                acc += s * s;
            } else {
                acc += 2.0 * s * s;
            }
        }
    }
    libm::sqrt(acc)
}
