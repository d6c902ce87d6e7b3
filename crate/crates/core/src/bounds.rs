//! Upper bounds on the hidden-state Jacobian of a gated cell.
//!
//! For one step,
//!
//! ```text
//! ‖∂h_t/∂h_{t−1}‖₂ ≤ α + β‖U_c‖₂
//! α = δ_u (max_i h_{t−1,i} + max_i c_{t,i}) ‖U_u‖₂ + max_i (1 − u_{t,i})
//! β = max_i u_{t,i} (δ_r ‖U_r‖₂ max_i h_{t−1,i} + max_i r_{t,i})
//! δ_u = max_i u_{t,i}(1 − u_{t,i}),  δ_r = max_i r_{t,i}(1 − r_{t,i})
//! ```
//!
//! The maxima are the signed maxima, evaluated verbatim. [`BoundReport`]
//! also carries a magnitude form (`|h|`, `|c|`) that holds for every state;
//! the signed form can undershoot when `h_{t−1}` and `c_t` are both mostly
//! negative.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{forward, jacobian_h, CellParams, StepCache};
use crate::linalg::spectral_norm_tight;
use crate::{Error, Result};

/// Power-iteration tolerance for every norm in a report.
pub const BOUND_NORM_TOL: f64 = 1e-9;
/// Largest distance from {0, 1} counted as a saturated gate entry.
pub const SATURATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrentNorms {
    pub u_r: f64,
    pub u_u: f64,
    pub u_c: f64,
}

impl RecurrentNorms {
    pub fn of(p: &CellParams) -> Result<Self> {
        Ok(RecurrentNorms {
            u_r: spectral_norm_tight(&p.u_r, BOUND_NORM_TOL)?,
            u_u: spectral_norm_tight(&p.u_u, BOUND_NORM_TOL)?,
            u_c: spectral_norm_tight(&p.u_c, BOUND_NORM_TOL)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub delta_u: f64,
    pub delta_r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u_c_norm: f64,
    pub u_r_norm: f64,
    pub u_u_norm: f64,
    /// `α + β‖U_c‖₂`
    pub bound: f64,
    /// `‖∂h_t/∂h_{t−1}‖₂` of the analytic Jacobian.
    pub measured: f64,
    /// `bound − measured`
    pub slack: f64,
    /// Largest distance of any `u_t` or `r_t` entry from {0, 1}.
    pub gate_saturation: f64,
    /// The bound with `max |h_{t−1}|` and `max |c_t|` in place of the signed maxima.
    pub bound_abs: f64,
    /// The NC-GRU candidate was near a modReLU kink.
    pub near_kink: bool,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn max_abs_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

fn gate_spread(g: &[f64]) -> f64 {
    max_of(&g.iter().map(|&x| x * (1.0 - x)).collect::<Vec<_>>())
}

/// Report for one step, with the recurrent norms supplied by the caller.
pub fn compute_bound_with(cache: &StepCache, p: &CellParams, norms: RecurrentNorms) -> Result<BoundReport> {
    let delta_u = gate_spread(&cache.u);
    let delta_r = gate_spread(&cache.r);
    let max_h = max_of(&cache.h_prev);
    let max_c = max_of(&cache.c);
    let max_u = max_of(&cache.u);
    let max_r = max_of(&cache.r);
    let max_one_minus_u = max_of(&cache.u.iter().map(|u| 1.0 - u).collect::<Vec<_>>());

    let alpha = delta_u * (max_h + max_c) * norms.u_u + max_one_minus_u;
    let beta = max_u * (delta_r * norms.u_r * max_h + max_r);
    let bound = alpha + beta * norms.u_c;

    let (abs_h, abs_c) = (max_abs_of(&cache.h_prev), max_abs_of(&cache.c));
    let alpha_abs = delta_u * (abs_h + abs_c) * norms.u_u + max_one_minus_u;
    let beta_abs = max_u * (delta_r * norms.u_r * abs_h + max_r);
    let bound_abs = alpha_abs + beta_abs * norms.u_c;

    let jac = jacobian_h(p, cache)?;
    let measured = spectral_norm_tight(&jac.matrix, BOUND_NORM_TOL)?;
    let gate_saturation = cache
        .u
        .iter()
        .chain(cache.r.iter())
        .map(|&g| f64::min(g, 1.0 - g))
        .fold(0.0, f64::max);
    Ok(BoundReport {
        delta_u,
        delta_r,
        alpha,
        beta,
        u_c_norm: norms.u_c,
        u_r_norm: norms.u_r,
        u_u_norm: norms.u_u,
        bound,
        measured,
        slack: bound - measured,
        gate_saturation,
        bound_abs,
        near_kink: jac.near_kink,
    })
}

pub fn compute_bound(cache: &StepCache, p: &CellParams) -> Result<BoundReport> {
    compute_bound_with(cache, p, RecurrentNorms::of(p)?)
}

/// Gate pattern forced through large update/reset biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationRegime {
    /// Entries of `u_t` and `r_t` individually near 0 or 1, in a mixed pattern.
    Mixed,
    /// `u_t` near the zero vector (`r_t` near ones).
    UpdateNearZero,
    /// `u_t` near ones, `r_t` near the zero vector.
    UpdateOneResetZero,
    /// `u_t` and `r_t` both near ones.
    UpdateOneResetOne,
}

impl SaturationRegime {
    pub const ALL: [SaturationRegime; 4] = [
        SaturationRegime::Mixed,
        SaturationRegime::UpdateNearZero,
        SaturationRegime::UpdateOneResetZero,
        SaturationRegime::UpdateOneResetOne,
    ];

    /// Whole-vector regimes, where `α + β ≲ 1`.
    pub fn is_whole_vector(self) -> bool {
        self != SaturationRegime::Mixed
    }

    fn signs(self, i: usize) -> (f64, f64) {
        let alt = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        match self {
            SaturationRegime::Mixed => (alt(i), alt(i / 2)),
            SaturationRegime::UpdateNearZero => (-1.0, 1.0),
            SaturationRegime::UpdateOneResetZero => (1.0, -1.0),
            SaturationRegime::UpdateOneResetOne => (1.0, 1.0),
        }
    }
}

/// Bias magnitude that saturates both gates to [`SATURATION_TOL`] for any
/// input and previous state with entries in `[−1, 1]`.
pub fn forcing_magnitude(p: &CellParams) -> f64 {
    let logit = libm::log((1.0 - SATURATION_TOL) / SATURATION_TOL);
    let reach = f64::max(
        p.w_u.inf_norm() + p.u_u.inf_norm(),
        p.w_r.inf_norm() + p.u_r.inf_norm(),
    );
    logit + reach + 1.0
}

/// Copy of `p` with `b_u` and `b_r` set to `±magnitude` in the regime's pattern.
pub fn force_gates(p: &CellParams, regime: SaturationRegime, magnitude: f64) -> CellParams {
    let mut q = p.clone();
    for i in 0..q.hidden() {
        let (su, sr) = regime.signs(i);
        q.b_u[i] = su * magnitude;
        q.b_r[i] = sr * magnitude;
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary {
    pub regime: SaturationRegime,
    pub samples: usize,
    pub max_alpha_plus_beta: f64,
    pub max_bound: f64,
    pub max_measured: f64,
    pub max_delta_u: f64,
    pub max_delta_r: f64,
    pub max_saturation: f64,
    pub min_slack: f64,
}

/// Evaluates the bound on random states (`x`, `h_{t−1}` uniform in `[−1, 1]`)
/// with the gates forced into `regime`.
pub fn saturation_sweep(
    p: &CellParams,
    regime: SaturationRegime,
    samples: usize,
    seed: u64,
) -> Result<SweepSummary> {
    if regime == SaturationRegime::Mixed && p.hidden() < 2 {
        return Err(Error::Contract("a mixed gate pattern needs at least two units".into()));
    }
    if samples == 0 {
        return Err(Error::Contract("saturation sweep needs at least one sample".into()));
    }
    let forced = force_gates(p, regime, forcing_magnitude(p));
    let norms = RecurrentNorms::of(&forced)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SweepSummary {
        regime,
        samples,
        max_alpha_plus_beta: f64::NEG_INFINITY,
        max_bound: f64::NEG_INFINITY,
        max_measured: 0.0,
        max_delta_u: 0.0,
        max_delta_r: 0.0,
        max_saturation: 0.0,
        min_slack: f64::INFINITY,
    };
    for _ in 0..samples {
        let x: Vec<f64> = (0..p.input()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let h: Vec<f64> = (0..p.hidden()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let (_, cache) = forward(&forced, &x, &h)?;
        let r = compute_bound_with(&cache, &forced, norms)?;
        if r.gate_saturation > SATURATION_TOL {
            return Err(Error::Contract(format!(
                "regime {regime:?} not reached: gate saturation {:e}",
                r.gate_saturation
            )));
        }
        s.max_alpha_plus_beta = s.max_alpha_plus_beta.max(r.alpha + r.beta);
        s.max_bound = s.max_bound.max(r.bound);
        s.max_measured = s.max_measured.max(r.measured);
        s.max_delta_u = s.max_delta_u.max(r.delta_u);
        s.max_delta_r = s.max_delta_r.max(r.delta_r);
        s.max_saturation = s.max_saturation.max(r.gate_saturation);
        s.min_slack = s.min_slack.min(r.slack);
    }
    Ok(s)
}
