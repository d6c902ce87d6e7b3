//! Scaled Cayley parameterization of orthogonal weights with a Neumann-series
//! update of the cached inverse.
//!
//! An orthogonal weight is represented by a skew-symmetric `A` and a fixed
//! diagonal `D` of ±1 entries:
//!
//! ```text
//! U = (I + A)⁻¹ (I − A) D
//! ```
//!
//! Training changes `A` by a skew step `δA` (`A ← A − δA`). Instead of
//! refactoring `I + A` after every step, the cached inverse `Ã ≈ (I + A)⁻¹`
//! is advanced with the truncated series
//!
//! ```text
//! Ã ← (I + E + E² + … + Eᵖ) Ã,    E = Ã δA
//! ```
//!
//! which leaves an error of order `Eᵖ⁺¹`. Every `reset_every` steps the
//! inverse is recomputed exactly so the truncation error cannot pile up.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{exact_inverse, fro_dist_identity, matmul, spectral_norm_estimate, Matrix};
use crate::{Error, Result};

pub const DEFAULT_NEUMANN_ORDER: usize = 2;
pub const DEFAULT_RESET_EVERY: usize = 50;
/// Tolerance of the power iteration behind the contraction-norm diagnostic.
pub const CONTRACTION_TOL: f64 = 1e-8;

/// Diagonal matrix whose entries are exactly `+1` or `−1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "Vec<f64>", into = "Vec<f64>")
)]
pub struct SignDiagonal(Vec<f64>);

impl SignDiagonal {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_negative(&self) -> usize {
        self.0.iter().filter(|&&s| s < 0.0).count()
    }
}

impl TryFrom<Vec<f64>> for SignDiagonal {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        if let Some(bad) = v.iter().find(|&&s| s != 1.0 && s != -1.0) {
            return Err(Error::Range(format!("scaling entry {bad} is not ±1")));
        }
        Ok(SignDiagonal(v))
    }
}

impl From<SignDiagonal> for Vec<f64> {
    fn from(d: SignDiagonal) -> Self {
        d.0
    }
}

/// `diag(−1, …, −1, +1, …, +1)` with `num_neg` leading negative entries.
pub fn make_scaling(n: usize, num_neg: usize) -> Result<SignDiagonal> {
    if num_neg > n {
        return Err(Error::Range(format!("num_neg {num_neg} exceeds size {n}")));
    }
    Ok(SignDiagonal(
        (0..n).map(|i| if i < num_neg { -1.0 } else { 1.0 }).collect(),
    ))
}

/// Block-diagonal skew matrix from rotation angles: block `j` is
/// `[[0, s_j], [−s_j, 0]]` with `s_j = √((1 − cos t_j)/(1 + cos t_j))`.
/// Odd sizes get a trailing zero.
pub fn skew_from_angles(n: usize, angles: &[f64]) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::Size(format!("skew parameter needs n >= 2, got {n}")));
    }
    if angles.len() != n / 2 {
        return Err(Error::shape(n / 2, angles.len()));
    }
    let mut a = Matrix::zeros(n, n);
    for (j, &t) in angles.iter().enumerate() {
        let c = libm::cos(t);
        let s = libm::sqrt((1.0 - c) / (1.0 + c));
        a[(2 * j, 2 * j + 1)] = s;
        a[(2 * j + 1, 2 * j)] = -s;
    }
    Ok(a)
}

/// Random skew initialization with angles drawn uniformly from `[0, π/2]`.
pub fn init_skew(n: usize, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..n / 2).map(|_| rng.gen_range(0.0..=FRAC_PI_2)).collect();
    skew_from_angles(n, &angles)
}

fn check_skew(a: &Matrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::shape("square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    if !a.is_finite() {
        return Err(Error::Numeric(what.into()));
    }
    let tol = 1e-12 * a.max_abs().max(1.0);
    let r = a.skew_residual();
    if r > tol {
        return Err(Error::Contract(format!("{what} is not skew-symmetric (residual {r:e})")));
    }
    Ok(())
}

/// `I + s·a`
fn shifted_identity(a: &Matrix, s: f64) -> Matrix {
    let mut m = a.scale(s);
    for i in 0..m.rows() {
        m[(i, i)] += 1.0;
    }
    m
}

/// `Ã (I − A) D`
fn orthogonal_from_inverse(a_tilde: &Matrix, a: &Matrix, d: &SignDiagonal) -> Result<Matrix> {
    let i_minus_a = shifted_identity(a, -1.0).scale_cols(d.as_slice())?;
    matmul(a_tilde, &i_minus_a)
}

/// `U = (I + A)⁻¹ (I − A) D` through an LU inverse.
pub fn cayley_transform(a: &Matrix, d: &SignDiagonal) -> Result<Matrix> {
    check_skew(a, "A")?;
    if d.len() != a.rows() {
        return Err(Error::shape(a.rows(), d.len()));
    }
    let inv = exact_inverse(&shifted_identity(a, 1.0))?;
    orthogonal_from_inverse(&inv, a, d)
}

/// What happened during one update of a [`SkewOrthogonal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannDiagnostics {
    /// `‖Ã_prev δA‖₂`; the series is only valid while this stays below 1.
    pub contraction_norm: f64,
    /// `‖UᵀU − I‖_F` after the update (and after a reset, if one fired).
    pub drift: f64,
    /// Total number of updates applied so far.
    pub step: usize,
    pub reset: bool,
}

impl NeumannDiagnostics {
    /// The step ran outside the region where the series converges.
    pub fn contraction_warning(&self) -> bool {
        self.contraction_norm >= 1.0
    }
}

/// An orthogonal weight `U` parameterized by a skew `A`, a sign diagonal `D`
/// and a cached approximation `Ã` of `(I + A)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct SkewOrthogonal {
    a: Matrix,
    d: SignDiagonal,
    a_tilde: Matrix,
    u: Matrix,
    neumann_order: usize,
    /// Updates between exact resets; 0 disables resets.
    reset_every: usize,
    steps_since_reset: usize,
    steps: usize,
}

impl SkewOrthogonal {
    pub fn new(a: Matrix, d: SignDiagonal, neumann_order: usize, reset_every: usize) -> Result<Self> {
        check_skew(&a, "A")?;
        if d.len() != a.rows() {
            return Err(Error::shape(a.rows(), d.len()));
        }
        if !(1..=3).contains(&neumann_order) {
            return Err(Error::Range(format!("neumann order {neumann_order} not in 1..=3")));
        }
        let n = a.rows();
        let mut s = SkewOrthogonal {
            a,
            d,
            a_tilde: Matrix::identity(n),
            u: Matrix::identity(n),
            neumann_order,
            reset_every,
            steps_since_reset: 0,
            steps: 0,
        };
        s.reset()?;
        Ok(s)
    }

    /// Random block-diagonal `A`, `num_neg` negative signs in `D`.
    pub fn init(
        n: usize,
        num_neg: usize,
        seed: u64,
        neumann_order: usize,
        reset_every: usize,
    ) -> Result<Self> {
        Self::new(init_skew(n, seed)?, make_scaling(n, num_neg)?, neumann_order, reset_every)
    }

    /// Checks the invariants of a deserialized value.
    pub fn validate(&self) -> Result<()> {
        check_skew(&self.a, "A")?;
        let n = self.a.rows();
        if self.d.len() != n || self.a_tilde.shape() != (n, n) || self.u.shape() != (n, n) {
            return Err(Error::shape(format!("size {n}"), "inconsistent component sizes"));
        }
        if !(1..=3).contains(&self.neumann_order) {
            return Err(Error::Range(format!("neumann order {}", self.neumann_order)));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn d(&self) -> &SignDiagonal {
        &self.d
    }

    pub fn a_tilde(&self) -> &Matrix {
        &self.a_tilde
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn neumann_order(&self) -> usize {
        self.neumann_order
    }

    pub fn reset_every(&self) -> usize {
        self.reset_every
    }

    pub fn steps_since_reset(&self) -> usize {
        self.steps_since_reset
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn drift(&self) -> f64 {
        fro_dist_identity(&self.u)
    }

    /// `‖Ã (I + A) − I‖_F`
    pub fn inverse_residual(&self) -> f64 {
        let mut r = matmul(&self.a_tilde, &shifted_identity(&self.a, 1.0))
            .expect("square factors of equal size");
        for i in 0..r.rows() {
            r[(i, i)] -= 1.0;
        }
        r.fro_norm()
    }

    /// Recomputes `Ã = (I + A)⁻¹` exactly and refreshes `U`.
    pub fn reset(&mut self) -> Result<()> {
        self.a_tilde = exact_inverse(&shifted_identity(&self.a, 1.0))?;
        self.u = orthogonal_from_inverse(&self.a_tilde, &self.a, &self.d)?;
        self.steps_since_reset = 0;
        Ok(())
    }

    /// Maps `∇_U L` to `∇_A L = Vᵀ − V` with `V = Ãᵀ ∇_U L (D + Uᵀ)`.
    ///
    /// Uses the cached `Ã`, so between resets the pullback is as accurate as
    /// the Neumann approximation. The result is skew-symmetric exactly.
    pub fn grad_pullback(&self, grad_u: &Matrix) -> Result<Matrix> {
        let n = self.size();
        if grad_u.shape() != (n, n) {
            return Err(Error::shape(
                format!("{n}x{n}"),
                format!("{}x{}", grad_u.rows(), grad_u.cols()),
            ));
        }
        let mut d_plus_ut = self.u.transpose();
        for (i, &s) in self.d.as_slice().iter().enumerate() {
            d_plus_ut[(i, i)] += s;
        }
        let v = matmul(&matmul(&self.a_tilde.transpose(), grad_u)?, &d_plus_ut)?;
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let x = v[(j, i)] - v[(i, j)];
                g[(i, j)] = x;
                g[(j, i)] = -x;
            }
        }
        Ok(g)
    }

    fn begin_step(&self, delta_a: &Matrix) -> Result<(Matrix, f64)> {
        let n = self.size();
        if delta_a.shape() != (n, n) {
            return Err(Error::shape(
                format!("{n}x{n}"),
                format!("{}x{}", delta_a.rows(), delta_a.cols()),
            ));
        }
        check_skew(delta_a, "delta A")?;
        let e = matmul(&self.a_tilde, delta_a)?;
        let contraction_norm = spectral_norm_estimate(&e, CONTRACTION_TOL)?;
        Ok((e, contraction_norm))
    }

    fn finish_step(&mut self, contraction_norm: f64, allow_reset: bool) -> Result<NeumannDiagnostics> {
        self.steps += 1;
        self.steps_since_reset += 1;
        let mut reset = false;
        if allow_reset && self.reset_every > 0 && self.steps_since_reset >= self.reset_every {
            self.reset()?;
            reset = true;
        } else {
            self.u = orthogonal_from_inverse(&self.a_tilde, &self.a, &self.d)?;
        }
        if !self.u.is_finite() || !self.a_tilde.is_finite() {
            return Err(Error::Numeric("orthogonal update".into()));
        }
        Ok(NeumannDiagnostics {
            contraction_norm,
            drift: self.drift(),
            step: self.steps,
            reset,
        })
    }

    /// One update: `A ← A − δA`, `Ã` advanced by the truncated Neumann series,
    /// `U ← Ã (I − A) D`, with an exact reset every `reset_every` calls.
    ///
    /// A contraction norm of 1 or more does not abort the step; callers see
    /// it through [`NeumannDiagnostics::contraction_warning`].
    pub fn neumann_step(&mut self, delta_a: &Matrix) -> Result<NeumannDiagnostics> {
        let (e, contraction_norm) = self.begin_step(delta_a)?;
        self.a.axpy(-1.0, delta_a)?;
        // Σ_{i=0..p} Eⁱ Ã, evaluated as Ã + E(Ã + E(Ã + …))
        let mut acc = self.a_tilde.clone();
        for _ in 0..self.neumann_order {
            let mut next = matmul(&e, &acc)?;
            next.axpy(1.0, &self.a_tilde)?;
            acc = next;
        }
        self.a_tilde = acc;
        self.finish_step(contraction_norm, true)
    }

    /// Same update with `Ã` refactored exactly every step.
    pub fn exact_step(&mut self, delta_a: &Matrix) -> Result<NeumannDiagnostics> {
        let (_, contraction_norm) = self.begin_step(delta_a)?;
        self.a.axpy(-1.0, delta_a)?;
        self.a_tilde = exact_inverse(&shifted_identity(&self.a, 1.0))?;
        self.steps_since_reset = 0;
        self.finish_step(contraction_norm, false)
    }
}
