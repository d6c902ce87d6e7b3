//! Unrolled forward pass, loss and backpropagation through time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{cell_backward_accumulate, forward, CellParams, StepCache};
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// Linear map from the hidden state to the task output.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Readout {
    pub w: Matrix,
    pub b: Vector,
}

impl Readout {
    pub fn zeros(outputs: usize, hidden: usize) -> Self {
        Readout {
            w: Matrix::zeros(outputs, hidden),
            b: Vector::zeros(outputs),
        }
    }

    pub fn random<R: Rng>(outputs: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / libm::sqrt(hidden as f64);
        Readout {
            w: Matrix::from_fn(outputs, hidden, |_, _| rng.gen_range(-k..k)),
            b: Vector::zeros(outputs),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.outputs(), self.w.cols())
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.b.to_vec();
        self.w.gemv_add(h, &mut y);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossKind {
    /// Mean squared error on the final-step output.
    Mse,
    /// Softmax cross-entropy, averaged over the scored steps.
    CrossEntropy,
}

/// Supervision for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceTarget {
    /// Real-valued target for the readout at the last step.
    Regression(Vector),
    /// One class index per step.
    Classes(Vec<usize>),
    /// A single class index scored at the last step.
    FinalClass(usize),
}

impl SequenceTarget {
    pub fn loss_kind(&self) -> LossKind {
        match self {
            SequenceTarget::Regression(_) => LossKind::Mse,
            _ => LossKind::CrossEntropy,
        }
    }
}

/// Loss and gradients of one sequence.
///
/// `cell.u_r`, `cell.u_u` and `cell.u_c` are the raw `∇_U L` matrices; for
/// weights governed by a Cayley parameterization they are what
/// [`SkewOrthogonal::grad_pullback`](crate::orthocore::SkewOrthogonal::grad_pullback)
/// consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGrads {
    pub loss: f64,
    pub cell: CellParams,
    pub readout: Readout,
}

fn check_inputs(p: &CellParams, r: &Readout, inputs: &Matrix) -> Result<()> {
    if inputs.rows() == 0 {
        return Err(Error::Contract("empty input sequence".into()));
    }
    if inputs.cols() != p.input() {
        return Err(Error::shape(format!("input width {}", p.input()), inputs.cols()));
    }
    if r.w.cols() != p.hidden() {
        return Err(Error::shape(format!("readout over {} units", p.hidden()), r.w.cols()));
    }
    Ok(())
}

fn check_target(target: &SequenceTarget, steps: usize, outputs: usize) -> Result<()> {
    let class_ok = |c: usize| c < outputs;
    match target {
        SequenceTarget::Regression(t) if t.len() != outputs => {
            Err(Error::shape(format!("{outputs} regression targets"), t.len()))
        }
        SequenceTarget::Classes(cs) if cs.len() != steps => {
            Err(Error::shape(format!("{steps} step targets"), cs.len()))
        }
        SequenceTarget::Classes(cs) if !cs.iter().all(|&c| class_ok(c)) => {
            Err(Error::Range(format!("class index outside 0..{outputs}")))
        }
        SequenceTarget::FinalClass(c) if !class_ok(*c) => {
            Err(Error::Range(format!("class {c} outside 0..{outputs}")))
        }
        _ => Ok(()),
    }
}

/// Runs the cell over `inputs` (one row per step) from `h_0 = 0`.
pub fn forward_sequence(p: &CellParams, inputs: &Matrix) -> Result<Vec<StepCache>> {
    let mut h = Vector::zeros(p.hidden());
    let mut caches = Vec::with_capacity(inputs.rows());
    for t in 0..inputs.rows() {
        let (next, cache) = forward(p, inputs.row(t), &h)?;
        h = next;
        caches.push(cache);
    }
    Ok(caches)
}

/// `(loss, ∂loss/∂logits)` of softmax cross-entropy.
fn softmax_xent(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = libm::log(sum) + max - logits[class];
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    grad[class] -= 1.0;
    (loss, grad)
}

fn mse(y: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    let k = y.len() as f64;
    let loss = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k;
    let grad = y.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / k).collect();
    (loss, grad)
}

/// Which steps are scored, their weight and per-step loss.
fn step_loss(target: &SequenceTarget, t: usize, steps: usize, y: &[f64]) -> Option<(f64, Vec<f64>)> {
    let last = t + 1 == steps;
    match target {
        SequenceTarget::Regression(v) if last => Some(mse(y, v)),
        SequenceTarget::FinalClass(c) if last => Some(softmax_xent(y, *c)),
        SequenceTarget::Classes(cs) => {
            let (l, mut g) = softmax_xent(y, cs[t]);
            let w = 1.0 / steps as f64;
            g.iter_mut().for_each(|v| *v *= w);
            Some((l * w, g))
        }
        _ => None,
    }
}

/// Loss of one sequence without keeping activations.
pub fn sequence_loss(p: &CellParams, r: &Readout, inputs: &Matrix, target: &SequenceTarget) -> Result<f64> {
    check_inputs(p, r, inputs)?;
    let steps = inputs.rows();
    check_target(target, steps, r.outputs())?;
    let mut h = Vector::zeros(p.hidden());
    let mut loss = 0.0;
    for t in 0..steps {
        let (next, _) = forward(p, inputs.row(t), &h)?;
        h = next;
        let scored = match target {
            SequenceTarget::Classes(_) => true,
            _ => t + 1 == steps,
        };
        if scored {
            let y = r.apply(&h);
            loss += step_loss(target, t, steps, &y).map_or(0.0, |(l, _)| l);
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("sequence loss".into()));
    }
    Ok(loss)
}

/// BPTT over one sequence, adding `scale ×` the gradients into the buffers.
/// Returns the unscaled loss.
pub fn sequence_bptt_accumulate(
    p: &CellParams,
    r: &Readout,
    inputs: &Matrix,
    target: &SequenceTarget,
    scale: f64,
    cell_grads: &mut CellParams,
    readout_grads: &mut Readout,
) -> Result<f64> {
    check_inputs(p, r, inputs)?;
    let steps = inputs.rows();
    check_target(target, steps, r.outputs())?;
    let caches = forward_sequence(p, inputs)?;
    let n = p.hidden();
    let mut loss = 0.0;
    let mut grad_h = vec![0.0; n];
    for t in (0..steps).rev() {
        let h = &caches[t].h;
        let y = r.apply(h);
        if let Some((l, dy)) = step_loss(target, t, steps, &y) {
            loss += l;
            let dy: Vec<f64> = dy.into_iter().map(|v| v * scale).collect();
            readout_grads.w.add_outer(&dy, h);
            readout_grads.b.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
            r.w.gemv_t_add(&dy, &mut grad_h);
        }
        grad_h = cell_backward_accumulate(p, &caches[t], &grad_h, cell_grads)?.into_vec();
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("sequence loss".into()));
    }
    Ok(loss)
}

/// Loss and exact gradients of one sequence, `h_0 = 0`.
pub fn sequence_bptt(p: &CellParams, r: &Readout, inputs: &Matrix, target: &SequenceTarget) -> Result<SequenceGrads> {
    let mut cell = p.zeros_like();
    let mut readout = r.zeros_like();
    let loss = sequence_bptt_accumulate(p, r, inputs, target, 1.0, &mut cell, &mut readout)?;
    Ok(SequenceGrads { loss, cell, readout })
}
