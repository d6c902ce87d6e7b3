//! A single-layer recurrent model with a linear readout, and the training
//! step that interleaves ordinary optimizer updates with Neumann–Cayley
//! updates of the orthogonal recurrent weights.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cells::{sequence_bptt_accumulate, sequence_loss, CellParams, Gate, Readout, Variant};
use crate::linalg::Matrix;
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::orthocore::SkewOrthogonal;
use crate::tasks::TaskBatch;
use crate::{Error, Result};

/// Shape and orthogonal-weight layout of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    /// Recurrent weights kept orthogonal through a skew parameter.
    pub ortho: Vec<Gate>,
    /// Negative entries of each scaling diagonal.
    pub num_neg: usize,
    pub neumann_order: usize,
    pub reset_every: usize,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.output == 0 {
            return Err(Error::Size(format!(
                "input {}, hidden {} and output {} must be positive",
                self.input, self.hidden, self.output
            )));
        }
        if !self.ortho.is_empty() && self.hidden < 2 {
            return Err(Error::Size("orthogonal weights need hidden >= 2".into()));
        }
        if self.num_neg > self.hidden {
            return Err(Error::Range(format!("num_neg {} exceeds hidden {}", self.num_neg, self.hidden)));
        }
        for (i, g) in self.ortho.iter().enumerate() {
            if self.ortho[..i].contains(g) {
                return Err(Error::Contract(format!("gate {} listed twice", g.label())));
            }
        }
        if !(1..=3).contains(&self.neumann_order) {
            return Err(Error::Range(format!("neumann order {} not in 1..=3", self.neumann_order)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(self.input, self.hidden, self.output, self.ortho.len())
    }
}

/// Trainable parameters: cell, readout, and `n(n−1)/2` per skew parameter
/// in place of the `n²` entries of the weight it generates.
pub fn param_count(input: usize, hidden: usize, output: usize, ortho: usize) -> usize {
    let (m, n, k) = (input, hidden, output);
    let dense = 3 - ortho.min(3);
    3 * n * m + dense * n * n + ortho.min(3) * n * n.saturating_sub(1) / 2 + 3 * n + k * n + k
}

/// Smallest hidden size whose parameter count reaches `budget`.
pub fn hidden_for_budget(budget: usize, input: usize, output: usize, ortho: usize) -> usize {
    let mut n = 1;
    while param_count(input, n, output, ortho) < budget {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct OrthoWeight {
    pub gate: Gate,
    pub param: SkewOrthogonal,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Network {
    pub cell: CellParams,
    pub readout: Readout,
    /// For each listed gate, the cell's recurrent weight is a copy of `param.u()`.
    pub ortho: Vec<OrthoWeight>,
}

impl Network {
    /// Uniform `±1/√n` weights, zero biases, and a Cayley-initialized
    /// orthogonal weight for every gate in `spec.ortho`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = CellParams::random(spec.variant, spec.hidden, spec.input, &mut rng);
        let readout = Readout::random(spec.output, spec.hidden, &mut rng);
        let mut net = Network { cell, readout, ortho: Vec::new() };
        for (k, &gate) in spec.ortho.iter().enumerate() {
            let param = SkewOrthogonal::init(
                spec.hidden,
                spec.num_neg,
                seed.wrapping_add(0x9e37_79b9 * (k as u64 + 1)),
                spec.neumann_order,
                spec.reset_every,
            )?;
            net.ortho.push(OrthoWeight { gate, param });
        }
        net.sync();
        Ok(net)
    }

    fn sync(&mut self) {
        for w in &self.ortho {
            *self.cell.recurrent_mut(w.gate) = w.param.u().clone();
        }
    }

    pub fn is_ortho(&self, gate: Gate) -> bool {
        self.ortho.iter().any(|w| w.gate == gate)
    }

    pub fn param_count(&self) -> usize {
        param_count(self.cell.input(), self.cell.hidden(), self.readout.outputs(), self.ortho.len())
    }

    /// Largest `‖UᵀU − I‖_F` over the orthogonal weights (0 if none).
    pub fn max_drift(&self) -> f64 {
        self.ortho.iter().map(|w| w.param.drift()).fold(0.0, f64::max)
    }

    /// Mean loss over a batch.
    pub fn loss(&self, batch: &TaskBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let mut total = 0.0;
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            total += sequence_loss(&self.cell, &self.readout, x, y)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss and gradients over a batch. The recurrent-weight gradients
    /// are `∇_U L`, including for orthogonal weights.
    pub fn gradients(&self, batch: &TaskBatch) -> Result<(f64, CellParams, Readout)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut cell = self.cell.zeros_like();
        let mut readout = self.readout.zeros_like();
        let mut total = 0.0;
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            total += sequence_bptt_accumulate(&self.cell, &self.readout, x, y, scale, &mut cell, &mut readout)?;
        }
        Ok((total * scale, cell, readout))
    }

    /// Checks shapes, the orthogonal parameters, and that each orthogonal
    /// weight in the cell matches its generator.
    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        if self.readout.w.cols() != self.cell.hidden() || self.readout.b.len() != self.readout.outputs() {
            return Err(Error::shape(format!("readout over {} units", self.cell.hidden()), self.readout.w.cols()));
        }
        for w in &self.ortho {
            w.param.validate()?;
            if w.param.u() != self.cell.recurrent(w.gate) {
                return Err(Error::Contract(format!("U_{} differs from its generator", w.gate.label())));
            }
        }
        Ok(())
    }
}

/// How the cached inverse follows `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InverseMode {
    Neumann,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    /// Largest drift over orthogonal weights after the update.
    pub drift: f64,
    /// Largest `‖Ã δA‖₂` over orthogonal weights; `None` without any.
    pub contraction_norm: Option<f64>,
    pub reset: bool,
}

/// Optimizer state for every trainable tensor of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Trainer {
    pub mode: InverseMode,
    /// One per cell tensor in parameter order; unused for orthogonal weights.
    cell: Vec<OptimizerState>,
    readout: [OptimizerState; 2],
    /// One per orthogonal weight, acting on `A`.
    skew: Vec<OptimizerState>,
    steps: u64,
}

impl Trainer {
    /// `optimizer` drives ordinary parameters; the skew parameters use the
    /// same rule with `lr_a`.
    pub fn new(net: &Network, optimizer: OptimizerConfig, lr_a: f64, mode: InverseMode) -> Result<Self> {
        optimizer.validate()?;
        let skew_cfg = OptimizerConfig { learning_rate: lr_a, ..optimizer };
        skew_cfg.validate()?;
        let cell = net
            .cell
            .tensors()
            .iter()
            .map(|(_, t)| OptimizerState::new(optimizer, t.len()))
            .collect();
        let readout = [
            OptimizerState::new(optimizer, net.readout.w.as_slice().len()),
            OptimizerState::new(optimizer, net.readout.b.len()),
        ];
        let skew = net
            .ortho
            .iter()
            .map(|w| OptimizerState::new(skew_cfg, w.param.size() * w.param.size()))
            .collect();
        Ok(Trainer { mode, cell, readout, skew, steps: 0 })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Checks that the buffers fit `net`.
    pub fn check(&self, net: &Network) -> Result<()> {
        let fits = self.cell.len() == 9 && self.skew.len() == net.ortho.len();
        if !fits {
            return Err(Error::Contract("optimizer state does not match the network".into()));
        }
        Ok(())
    }

    /// One iteration: batch-mean BPTT, optimizer steps on every ordinary
    /// tensor, then for each orthogonal weight the pullback to `A`, an
    /// optimizer step on `A`, and the Neumann (or exact) update of `U`.
    pub fn step(&mut self, net: &mut Network, batch: &TaskBatch) -> Result<StepReport> {
        self.check(net)?;
        let (loss, mut grads, readout_grads) = net.gradients(batch)?;
        if !loss.is_finite() {
            return Err(Error::Numeric("training loss".into()));
        }

        let ortho_idx: Vec<usize> = net.ortho.iter().map(|w| gate_tensor(w.gate)).collect();
        let grad_tensors = grads.tensors();
        for (k, ((_, param), (_, grad))) in net.cell.tensors_mut().into_iter().zip(grad_tensors).enumerate() {
            if !ortho_idx.contains(&k) {
                self.cell[k].apply(param, grad)?;
            }
        }
        self.readout[0].apply(net.readout.w.as_mut_slice(), readout_grads.w.as_slice())?;
        self.readout[1].apply(&mut net.readout.b, &readout_grads.b)?;

        let mut report = StepReport { loss, drift: 0.0, contraction_norm: None, reset: false };
        for (w, opt) in net.ortho.iter_mut().zip(&mut self.skew) {
            let grad_u = core::mem::replace(grads.recurrent_mut(w.gate), Matrix::zeros(0, 0));
            let grad_a = w.param.grad_pullback(&grad_u)?;
            let n = w.param.size();
            let delta = Matrix::from_vec(n, n, opt.step(grad_a.as_slice())?)?;
            let diag = match self.mode {
                InverseMode::Neumann => w.param.neumann_step(&delta)?,
                InverseMode::Exact => w.param.exact_step(&delta)?,
            };
            report.drift = report.drift.max(diag.drift);
            report.contraction_norm = Some(report.contraction_norm.map_or(diag.contraction_norm, |c: f64| c.max(diag.contraction_norm)));
            report.reset |= diag.reset;
        }
        net.sync();
        self.steps += 1;
        Ok(report)
    }
}

fn gate_tensor(gate: Gate) -> usize {
    match gate {
        Gate::Reset => 3,
        Gate::Update => 4,
        Gate::Candidate => 5,
    }
}
