//! SGD, RMSProp and Adam.
//!
//! [`OptimizerState::step`] returns the update to subtract from the
//! parameter, so a Cayley weight is advanced with `A ← A − δA` as is. All
//! three rules act entrywise with an odd function of the gradient and even
//! moment buffers, so a skew-symmetric gradient stream yields skew-symmetric
//! updates bit for bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// RMSProp decay of the squared-gradient average.
    pub decay: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Rmsprop, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerConfig {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Range(format!("learning rate {}", self.learning_rate)));
        }
        if !(unit(self.beta1) && unit(self.beta2) && unit(self.decay)) {
            return Err(Error::Range("beta1, beta2 and decay must lie in [0, 1)".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Range(format!("epsilon {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Moment buffers of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, len: usize) -> Self {
        let (m, v) = match config.kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Rmsprop => (0, len),
            OptimizerKind::Adam => (len, len),
        };
        OptimizerState {
            config,
            first_moment: vec![0.0; m],
            second_moment: vec![0.0; v],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Consumes one gradient and returns the update `δ` to subtract.
    ///
    /// Non-finite gradients are rejected before any buffer changes.
    pub fn step(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        let expected = match self.config.kind {
            OptimizerKind::Sgd => grad.len(),
            _ => self.second_moment.len(),
        };
        if grad.len() != expected {
            return Err(Error::shape(expected, grad.len()));
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::Numeric("optimizer gradient".into()));
        }
        self.step_count += 1;
        let c = self.config;
        let lr = c.learning_rate;
        let delta = match c.kind {
            OptimizerKind::Sgd => grad.iter().map(|g| lr * g).collect(),
            OptimizerKind::Rmsprop => grad
                .iter()
                .zip(self.second_moment.iter_mut())
                .map(|(&g, v)| {
                    *v = c.decay * *v + (1.0 - c.decay) * g * g;
                    lr * g / (libm::sqrt(*v) + c.epsilon)
                })
                .collect(),
            OptimizerKind::Adam => {
                let t = self.step_count as f64;
                let bc1 = 1.0 - libm::pow(c.beta1, t);
                let bc2 = 1.0 - libm::pow(c.beta2, t);
                grad.iter()
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        lr * m_hat / (libm::sqrt(v_hat) + c.epsilon)
                    })
                    .collect()
            }
        };
        Ok(delta)
    }

    /// Steps and subtracts the update from `param` in place.
    pub fn apply(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::shape(param.len(), grad.len()));
        }
        let delta = self.step(grad)?;
        param.iter_mut().zip(&delta).for_each(|(p, d)| *p -= d);
        Ok(())
    }
}
