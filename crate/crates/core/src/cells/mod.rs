//! GRU and NC-GRU cells with exact hand-derived gradients.
//!
//! Both variants share the gate equations
//!
//! ```text
//! r_t = σ(W_r x_t + U_r h_{t−1} + b_r)
//! u_t = σ(W_u x_t + U_u h_{t−1} + b_u)
//! h_t = (1 − u_t) ⊙ h_{t−1} + u_t ⊙ c_t
//! ```
//!
//! and differ in the candidate: the GRU uses `c_t = tanh(W_c x_t + U_c(r_t ⊙ h_{t−1}) + b_c)`,
//! the NC-GRU uses `c_t = modReLU(W_c x_t + U_c(r_t ⊙ h_{t−1}); b)` with no additive bias.
//! In [`CellParams`] the field `b_c` holds `b_c` for the GRU and the modReLU
//! threshold `b` for the NC-GRU.

mod sequence;

pub use sequence::{
    forward_sequence, sequence_bptt, sequence_bptt_accumulate, sequence_loss, LossKind, Readout,
    SequenceGrads, SequenceTarget,
};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// Distance from a modReLU kink below which the cell is considered
/// non-differentiable for checking purposes.
pub const KINK_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    Gru,
    #[cfg_attr(feature = "serde", serde(rename = "ncgru"))]
    NcGru,
}

/// Recurrent weight slot of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Gate {
    /// `U_r`
    #[cfg_attr(feature = "serde", serde(rename = "r"))]
    Reset,
    /// `U_u`
    #[cfg_attr(feature = "serde", serde(rename = "u"))]
    Update,
    /// `U_c`
    #[cfg_attr(feature = "serde", serde(rename = "c"))]
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::Reset, Gate::Update, Gate::Candidate];

    pub fn label(self) -> &'static str {
        match self {
            Gate::Reset => "U_r",
            Gate::Update => "U_u",
            Gate::Candidate => "U_c",
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn modrelu_scalar(x: f64, b: f64) -> f64 {
    signum0(x) * f64::max(x.abs() + b, 0.0)
}

/// `sgn(x) · ReLU(|x| + b)` elementwise, with `sgn(0) = 0`.
pub fn modrelu(x: &[f64], b: &[f64]) -> Result<Vector> {
    if x.len() != b.len() {
        return Err(Error::shape(x.len(), b.len()));
    }
    Ok(x.iter().zip(b).map(|(&x, &b)| modrelu_scalar(x, b)).collect::<Vec<_>>().into())
}

/// `(∂/∂x, ∂/∂b)` of modReLU; zero on the clipped branch and at the kink.
#[inline]
fn modrelu_grad(x: f64, b: f64) -> (f64, f64) {
    if x != 0.0 && x.abs() + b > 0.0 {
        (1.0, signum0(x))
    } else {
        (0.0, 0.0)
    }
}

/// Whether modReLU is within `tol` of one of its non-differentiable points.
#[inline]
pub fn near_modrelu_kink(x: f64, b: f64, tol: f64) -> bool {
    (x.abs() + b).abs() < tol || (b > 0.0 && x.abs() < tol)
}

/// Weights and biases of one cell. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct CellParams {
    pub variant: Variant,
    pub w_r: Matrix,
    pub w_u: Matrix,
    pub w_c: Matrix,
    pub u_r: Matrix,
    pub u_u: Matrix,
    pub u_c: Matrix,
    pub b_r: Vector,
    pub b_u: Vector,
    /// Candidate bias (GRU) or modReLU threshold (NC-GRU).
    pub b_c: Vector,
}

pub const PARAM_NAMES: [&str; 9] = ["w_r", "w_u", "w_c", "u_r", "u_u", "u_c", "b_r", "b_u", "b_c"];

impl CellParams {
    pub fn zeros(variant: Variant, hidden: usize, input: usize) -> Self {
        let w = Matrix::zeros(hidden, input);
        let u = Matrix::zeros(hidden, hidden);
        let b = Vector::zeros(hidden);
        CellParams {
            variant,
            w_r: w.clone(),
            w_u: w.clone(),
            w_c: w,
            u_r: u.clone(),
            u_u: u.clone(),
            u_c: u,
            b_r: b.clone(),
            b_u: b.clone(),
            b_c: b,
        }
    }

    /// Every weight drawn from `U(−1/√n, 1/√n)`, biases zero.
    pub fn random<R: Rng>(variant: Variant, hidden: usize, input: usize, rng: &mut R) -> Self {
        let k = 1.0 / libm::sqrt(hidden as f64);
        let mut p = Self::zeros(variant, hidden, input);
        for (_, t) in p.tensors_mut().into_iter().take(6) {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-k..k));
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.variant, self.hidden(), self.input())
    }

    pub fn hidden(&self) -> usize {
        self.u_r.rows()
    }

    pub fn input(&self) -> usize {
        self.w_r.cols()
    }

    pub fn recurrent(&self, gate: Gate) -> &Matrix {
        match gate {
            Gate::Reset => &self.u_r,
            Gate::Update => &self.u_u,
            Gate::Candidate => &self.u_c,
        }
    }

    pub fn recurrent_mut(&mut self, gate: Gate) -> &mut Matrix {
        match gate {
            Gate::Reset => &mut self.u_r,
            Gate::Update => &mut self.u_u,
            Gate::Candidate => &mut self.u_c,
        }
    }

    /// Flat views in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 9] {
        [
            ("w_r", self.w_r.as_slice()),
            ("w_u", self.w_u.as_slice()),
            ("w_c", self.w_c.as_slice()),
            ("u_r", self.u_r.as_slice()),
            ("u_u", self.u_u.as_slice()),
            ("u_c", self.u_c.as_slice()),
            ("b_r", &self.b_r),
            ("b_u", &self.b_u),
            ("b_c", &self.b_c),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 9] {
        [
            ("w_r", self.w_r.as_mut_slice()),
            ("w_u", self.w_u.as_mut_slice()),
            ("w_c", self.w_c.as_mut_slice()),
            ("u_r", self.u_r.as_mut_slice()),
            ("u_u", self.u_u.as_mut_slice()),
            ("u_c", self.u_c.as_mut_slice()),
            ("b_r", &mut self.b_r),
            ("b_u", &mut self.b_u),
            ("b_c", &mut self.b_c),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.hidden(), self.input());
        let ok = [&self.w_r, &self.w_u, &self.w_c].iter().all(|w| w.shape() == (n, m))
            && [&self.u_r, &self.u_u, &self.u_c].iter().all(|u| u.shape() == (n, n))
            && [&self.b_r, &self.b_u, &self.b_c].iter().all(|b| b.len() == n);
        if !ok {
            return Err(Error::shape(format!("cell with n={n}, m={m}"), "inconsistent tensors"));
        }
        Ok(())
    }

    fn check_step(&self, x: &[f64], h_prev: &[f64]) -> Result<()> {
        if x.len() != self.input() {
            return Err(Error::shape(format!("input of length {}", self.input()), x.len()));
        }
        if h_prev.len() != self.hidden() {
            return Err(Error::shape(format!("state of length {}", self.hidden()), h_prev.len()));
        }
        Ok(())
    }
}

/// Activations of one forward step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Vector,
    pub h_prev: Vector,
    pub r: Vector,
    pub u: Vector,
    pub c: Vector,
    pub h: Vector,
    pub pre_r: Vector,
    pub pre_u: Vector,
    /// Argument of the candidate activation (includes `b_c` for the GRU).
    pub pre_c: Vector,
}

impl StepCache {
    /// Whether any candidate pre-activation sits near a modReLU kink.
    pub fn near_kink(&self, p: &CellParams, tol: f64) -> bool {
        p.variant == Variant::NcGru
            && self.pre_c.iter().zip(p.b_c.iter()).any(|(&a, &b)| near_modrelu_kink(a, b, tol))
    }
}

/// One forward step for either variant.
pub fn forward(p: &CellParams, x: &[f64], h_prev: &[f64]) -> Result<(Vector, StepCache)> {
    p.check_step(x, h_prev)?;
    let n = p.hidden();
    let mut pre_r = p.b_r.clone();
    p.w_r.gemv_add(x, &mut pre_r);
    p.u_r.gemv_add(h_prev, &mut pre_r);
    let mut pre_u = p.b_u.clone();
    p.w_u.gemv_add(x, &mut pre_u);
    p.u_u.gemv_add(h_prev, &mut pre_u);
    let r: Vector = pre_r.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>().into();
    let u: Vector = pre_u.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>().into();
    let gated: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut pre_c = match p.variant {
        Variant::Gru => p.b_c.clone(),
        Variant::NcGru => Vector::zeros(n),
    };
    p.w_c.gemv_add(x, &mut pre_c);
    p.u_c.gemv_add(&gated, &mut pre_c);
    let c: Vector = match p.variant {
        Variant::Gru => pre_c.iter().map(|&v| libm::tanh(v)).collect::<Vec<_>>().into(),
        Variant::NcGru => modrelu(&pre_c, &p.b_c)?,
    };
    let h: Vector = (0..n)
        .map(|i| (1.0 - u[i]) * h_prev[i] + u[i] * c[i])
        .collect::<Vec<_>>()
        .into();
    let cache = StepCache {
        x: x.into(),
        h_prev: h_prev.into(),
        r,
        u,
        c,
        h: h.clone(),
        pre_r,
        pre_u,
        pre_c,
    };
    Ok((h, cache))
}

fn expect_variant(p: &CellParams, v: Variant) -> Result<()> {
    if p.variant != v {
        return Err(Error::Contract(format!("expected {v:?} parameters, got {:?}", p.variant)));
    }
    Ok(())
}

/// Standard GRU step (`Φ = tanh`).
pub fn gru_forward(p: &CellParams, x: &[f64], h_prev: &[f64]) -> Result<(Vector, StepCache)> {
    expect_variant(p, Variant::Gru)?;
    forward(p, x, h_prev)
}

/// NC-GRU step (`Φ = modReLU`, no candidate bias).
pub fn ncgru_forward(p: &CellParams, x: &[f64], h_prev: &[f64]) -> Result<(Vector, StepCache)> {
    expect_variant(p, Variant::NcGru)?;
    forward(p, x, h_prev)
}

/// `∂c/∂pre_c` and `∂c/∂b_c`, per entry.
#[inline]
fn candidate_grads(p: &CellParams, cache: &StepCache, i: usize) -> (f64, f64) {
    match p.variant {
        Variant::Gru => {
            let c = cache.c[i];
            let d = 1.0 - c * c;
            (d, d)
        }
        Variant::NcGru => modrelu_grad(cache.pre_c[i], p.b_c[i]),
    }
}

/// Backward step that adds parameter gradients into `grads` and returns
/// `∂L/∂h_{t−1}`.
pub fn cell_backward_accumulate(
    p: &CellParams,
    cache: &StepCache,
    grad_h: &[f64],
    grads: &mut CellParams,
) -> Result<Vector> {
    if grads.variant != p.variant {
        return Err(Error::Contract("gradient buffer variant differs from parameters".into()));
    }
    let n = p.hidden();
    if grad_h.len() != n || cache.h.len() != n {
        return Err(Error::shape(n, grad_h.len()));
    }
    let mut grad_prev = vec![0.0; n];
    let mut d_pre_c = vec![0.0; n];
    let mut d_pre_u = vec![0.0; n];
    let mut d_b_c = vec![0.0; n];
    let mut gated = vec![0.0; n];
    for i in 0..n {
        let g = grad_h[i];
        let u = cache.u[i];
        let dc = g * u;
        let du = g * (cache.c[i] - cache.h_prev[i]);
        grad_prev[i] = g * (1.0 - u);
        let (dc_dpre, dc_db) = candidate_grads(p, cache, i);
        d_pre_c[i] = dc * dc_dpre;
        d_b_c[i] = dc * dc_db;
        d_pre_u[i] = du * u * (1.0 - u);
        gated[i] = cache.r[i] * cache.h_prev[i];
    }
    grads.w_c.add_outer(&d_pre_c, &cache.x);
    grads.u_c.add_outer(&d_pre_c, &gated);
    grads.b_c.iter_mut().zip(&d_b_c).for_each(|(a, b)| *a += b);

    let mut d_gated = vec![0.0; n];
    p.u_c.gemv_t_add(&d_pre_c, &mut d_gated);
    let mut d_pre_r = vec![0.0; n];
    for i in 0..n {
        grad_prev[i] += d_gated[i] * cache.r[i];
        let r = cache.r[i];
        d_pre_r[i] = d_gated[i] * cache.h_prev[i] * r * (1.0 - r);
    }

    grads.w_u.add_outer(&d_pre_u, &cache.x);
    grads.u_u.add_outer(&d_pre_u, &cache.h_prev);
    grads.b_u.iter_mut().zip(&d_pre_u).for_each(|(a, b)| *a += b);
    p.u_u.gemv_t_add(&d_pre_u, &mut grad_prev);

    grads.w_r.add_outer(&d_pre_r, &cache.x);
    grads.u_r.add_outer(&d_pre_r, &cache.h_prev);
    grads.b_r.iter_mut().zip(&d_pre_r).for_each(|(a, b)| *a += b);
    p.u_r.gemv_t_add(&d_pre_r, &mut grad_prev);

    Ok(grad_prev.into())
}

/// Gradients of a scalar loss with respect to every parameter and to
/// `h_{t−1}`, given `∂L/∂h_t`.
pub fn cell_backward(p: &CellParams, cache: &StepCache, grad_h: &[f64]) -> Result<(CellParams, Vector)> {
    let mut grads = p.zeros_like();
    let prev = cell_backward_accumulate(p, cache, grad_h, &mut grads)?;
    Ok((grads, prev))
}

/// Analytic `∂h_t/∂h_{t−1}` of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StateJacobian {
    pub matrix: Matrix,
    /// Set for NC-GRU states whose candidate sits within [`KINK_TOL`] of a
    /// modReLU kink, where the matrix is only a one-sided derivative.
    pub near_kink: bool,
}

/// `diag(1 − u) + diag((c − h_{t−1}) ⊙ u(1 − u)) U_u
///  + diag(u ⊙ Φ′) U_c (diag(r) + diag(h_{t−1} ⊙ r(1 − r)) U_r)`
pub fn jacobian_h(p: &CellParams, cache: &StepCache) -> Result<StateJacobian> {
    let n = p.hidden();
    if cache.h.len() != n {
        return Err(Error::shape(n, cache.h.len()));
    }
    // inner = diag(r) + diag(h ⊙ r(1−r)) U_r
    let mut inner = Matrix::zeros(n, n);
    for i in 0..n {
        let r = cache.r[i];
        let s = cache.h_prev[i] * r * (1.0 - r);
        for (dst, src) in inner.row_mut(i).iter_mut().zip(p.u_r.row(i)) {
            *dst = s * src;
        }
        inner[(i, i)] += r;
    }
    let cand = p.u_c.matmul(&inner)?;
    let mut j = Matrix::zeros(n, n);
    for i in 0..n {
        let u = cache.u[i];
        let su = (cache.c[i] - cache.h_prev[i]) * u * (1.0 - u);
        let sc = u * candidate_grads(p, cache, i).0;
        let (uu_row, cand_row) = (p.u_u.row(i), cand.row(i));
        for (k, dst) in j.row_mut(i).iter_mut().enumerate() {
            *dst = su * uu_row[k] + sc * cand_row[k];
        }
        j[(i, i)] += 1.0 - u;
    }
    Ok(StateJacobian {
        matrix: j,
        near_kink: cache.near_kink(p, KINK_TOL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(variant: Variant, n: usize, m: usize, seed: u64) -> CellParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = CellParams::zeros(variant, n, m);
        for (_, t) in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
        }
        p
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn modrelu_cases() {
        assert_eq!(modrelu_scalar(0.0, 0.7), 0.0);
        assert_eq!(modrelu_scalar(2.0, -1.0), 1.0);
        assert_eq!(modrelu_scalar(-0.5, -1.0), 0.0);
        assert_eq!(modrelu_scalar(-2.0, -1.0), -1.0);
        assert!(modrelu(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_state_gru() {
        let p = CellParams::zeros(Variant::Gru, 3, 2);
        let (h, cache) = gru_forward(&p, &[0.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(&*cache.r, &[0.5; 3]);
        assert_eq!(&*cache.u, &[0.5; 3]);
        assert_eq!(&*cache.c, &[0.0; 3]);
        assert_eq!(&*h, &[0.0; 3]);
    }

    #[test]
    fn saturated_update_copies_candidate() {
        let mut p = random_params(Variant::Gru, 4, 3, 1);
        p.b_u.iter_mut().for_each(|b| *b = 40.0);
        let (h, cache) = forward(&p, &[0.1, -0.2, 0.3], &[0.5, -0.5, 0.2, 0.1]).unwrap();
        for i in 0..4 {
            assert!((h[i] - cache.c[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_candidate_keeps_state() {
        let mut p = random_params(Variant::NcGru, 4, 3, 2);
        p.b_c.iter_mut().for_each(|b| *b = -100.0);
        let h_prev = [0.5, -0.5, 0.2, 0.1];
        let (h, cache) = ncgru_forward(&p, &[0.1, -0.2, 0.3], &h_prev).unwrap();
        assert_eq!(&*cache.c, &[0.0; 4]);
        for i in 0..4 {
            assert_eq!(h[i], (1.0 - cache.u[i]) * h_prev[i]);
        }
        let z = CellParams::zeros(Variant::NcGru, 3, 2);
        assert_eq!(&*ncgru_forward(&z, &[0.0; 2], &[0.0; 3]).unwrap().0, &[0.0; 3]);
    }

    /// Straight-line restatement of the four cell equations.
    fn reference_step(p: &CellParams, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = p.hidden();
        let m = p.input();
        let lin = |w: &Matrix, u: &Matrix, b: Option<&[f64]>, hv: &[f64], i: usize| {
            let mut s = b.map_or(0.0, |b| b[i]);
            for k in 0..m {
                s += w[(i, k)] * x[k];
            }
            for k in 0..n {
                s += u[(i, k)] * hv[k];
            }
            s
        };
        let r: Vec<f64> = (0..n).map(|i| sigmoid(lin(&p.w_r, &p.u_r, Some(&p.b_r), h, i))).collect();
        let u: Vec<f64> = (0..n).map(|i| sigmoid(lin(&p.w_u, &p.u_u, Some(&p.b_u), h, i))).collect();
        let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
        (0..n)
            .map(|i| {
                let c = match p.variant {
                    Variant::Gru => libm::tanh(lin(&p.w_c, &p.u_c, Some(&p.b_c), &rh, i)),
                    Variant::NcGru => {
                        let a = lin(&p.w_c, &p.u_c, None, &rh, i);
                        let mag = (a.abs() + p.b_c[i]).max(0.0);
                        if a > 0.0 {
                            mag
                        } else if a < 0.0 {
                            -mag
                        } else {
                            0.0
                        }
                    }
                };
                (1.0 - u[i]) * h[i] + u[i] * c
            })
            .collect()
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for variant in [Variant::Gru, Variant::NcGru] {
            for seed in 0..5 {
                let p = random_params(variant, 6, 4, seed);
                let x = random_vec(4, &mut rng);
                let h = random_vec(6, &mut rng);
                let (got, _) = forward(&p, &x, &h).unwrap();
                let want = reference_step(&p, &x, &h);
                for i in 0..6 {
                    assert!((got[i] - want[i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn variant_and_shape_errors() {
        let p = CellParams::zeros(Variant::Gru, 3, 2);
        assert!(matches!(ncgru_forward(&p, &[0.0; 2], &[0.0; 3]), Err(Error::Contract(_))));
        assert!(matches!(forward(&p, &[0.0; 3], &[0.0; 3]), Err(Error::Shape { .. })));
        let (_, cache) = forward(&p, &[0.0; 2], &[0.0; 3]).unwrap();
        let mut wrong = CellParams::zeros(Variant::NcGru, 3, 2);
        assert!(cell_backward_accumulate(&p, &cache, &[1.0; 3], &mut wrong).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = random_params(Variant::Gru, 4, 3, 3);
        let (_, cache) = forward(&p, &[0.3, 0.1, -0.4], &[0.2, 0.0, -0.3, 0.5]).unwrap();
        let (g, prev) = cell_backward(&p, &cache, &[0.0; 4]).unwrap();
        assert_eq!(g, p.zeros_like());
        assert_eq!(&*prev, &[0.0; 4]);
    }

    fn fd_check(variant: Variant, seed: u64) {
        let n = 4;
        let m = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, x, h, w) = loop {
            let p = random_params(variant, n, m, rng.gen());
            let x = random_vec(m, &mut rng);
            let h = random_vec(n, &mut rng);
            let (_, cache) = forward(&p, &x, &h).unwrap();
            if !cache.near_kink(&p, KINK_TOL) {
                break (p, x, h, random_vec(n, &mut rng));
            }
        };
        let loss = |p: &CellParams, h: &[f64]| -> f64 {
            let (ht, _) = forward(p, &x, h).unwrap();
            ht.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = forward(&p, &x, &h).unwrap();
        let (grads, prev) = cell_backward(&p, &cache, &w).unwrap();
        let eps = 1e-6;
        for (k, (name, analytic)) in grads.tensors().into_iter().enumerate() {
            let mut num = vec![0.0; analytic.len()];
            for (idx, slot) in num.iter_mut().enumerate() {
                let mut plus = p.clone();
                plus.tensors_mut()[k].1[idx] += eps;
                let mut minus = p.clone();
                minus.tensors_mut()[k].1[idx] -= eps;
                *slot = (loss(&plus, &h) - loss(&minus, &h)) / (2.0 * eps);
            }
            let rel = rel_err(analytic, &num);
            assert!(rel < 1e-5, "{variant:?} {name}: {rel}");
        }
        let num_prev: Vec<f64> = (0..n)
            .map(|i| {
                let mut hp = h.clone();
                hp[i] += eps;
                let mut hm = h.clone();
                hm[i] -= eps;
                (loss(&p, &hp) - loss(&p, &hm)) / (2.0 * eps)
            })
            .collect();
        assert!(rel_err(&prev, &num_prev) < 1e-5);
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    #[test]
    fn gru_backward_matches_finite_differences() {
        for seed in 0..3 {
            fd_check(Variant::Gru, seed);
        }
    }

    #[test]
    fn ncgru_backward_matches_finite_differences() {
        for seed in 10..13 {
            fd_check(Variant::NcGru, seed);
        }
    }

    #[test]
    fn jacobian_identity_when_update_closed() {
        let mut p = random_params(Variant::Gru, 4, 2, 5);
        p.b_u.iter_mut().for_each(|b| *b = -800.0);
        let (_, cache) = forward(&p, &[0.2, 0.4], &[0.1, 0.2, 0.3, -0.4]).unwrap();
        let j = jacobian_h(&p, &cache).unwrap();
        assert_eq!(j.matrix, Matrix::identity(4));
        assert!(!j.near_kink);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 5;
        let p = random_params(Variant::Gru, n, 3, 6);
        let x = random_vec(3, &mut rng);
        let h = random_vec(n, &mut rng);
        let (_, cache) = forward(&p, &x, &h).unwrap();
        let j = jacobian_h(&p, &cache).unwrap().matrix;
        let eps = 1e-6;
        for col in 0..n {
            let mut hp = h.clone();
            hp[col] += eps;
            let mut hm = h.clone();
            hm[col] -= eps;
            let (a, _) = forward(&p, &x, &hp).unwrap();
            let (b, _) = forward(&p, &x, &hm).unwrap();
            for row in 0..n {
                let fd = (a[row] - b[row]) / (2.0 * eps);
                assert!((fd - j[(row, col)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tanh_states_stay_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(Variant::Gru, 8, 3, 8).clone();
        let mut p = p;
        p.u_c = p.u_c.scale(5.0);
        p.b_c.iter_mut().for_each(|b| *b *= 5.0);
        let mut h = vec![0.0; 8];
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (next, cache) = forward(&p, &x, &h).unwrap();
            assert!(next.iter().all(|v| v.abs() <= 1.0));
            assert!(cache.r.iter().chain(cache.u.iter()).all(|&g| g > 0.0 && g < 1.0));
            h = next.into_vec();
        }
    }
}
