//! Experiment configuration: JSON schema, validation and desk presets.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use ncgru_core::cells::{Gate, Variant};
use ncgru_core::network::{InverseMode, NetworkSpec};
use ncgru_core::optim::{OptimizerConfig, OptimizerKind};
use ncgru_core::orthocore::{DEFAULT_NEUMANN_ORDER, DEFAULT_RESET_EVERY};
use ncgru_core::tasks::{TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: TaskKind,
    #[serde(rename = "T")]
    pub t: usize,
    /// Bracket types (parenthesis).
    #[serde(default = "ten")]
    pub n_pairs: usize,
    /// Data symbols (denoise).
    #[serde(default = "ten")]
    pub alphabet_n: usize,
    /// Score only the last step (parenthesis).
    #[serde(default)]
    pub final_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    #[serde(default)]
    pub ortho_set: Vec<Gate>,
    /// Negative entries of each scaling diagonal; `hidden / 2` when absent.
    #[serde(default)]
    pub num_neg: Option<usize>,
    #[serde(default = "default_order")]
    pub neumann_order: usize,
    /// Iterations between exact inverse resets; 0 disables them.
    #[serde(default = "default_reset")]
    pub reset_every: usize,
    /// Refactor `(I + A)⁻¹` exactly on every update instead of the series.
    #[serde(default)]
    pub exact_inverse_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Learning rate of the skew parameters; `lr` when absent.
    #[serde(default)]
    pub lr_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    /// Iterations between evaluations; the last iteration is always evaluated.
    pub eval_every: u64,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Fill the `wall_ms` column. Off by default so that metric files are
    /// reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("runs"),
            record_wall_time: false,
        }
    }
}

fn ten() -> usize {
    10
}

fn default_order() -> usize {
    DEFAULT_NEUMANN_ORDER
}

fn default_reset() -> usize {
    DEFAULT_RESET_EVERY
}

fn default_eval_size() -> usize {
    256
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn task_spec(&self) -> TaskSpec {
        let t = self.task.t;
        match self.task.name {
            TaskKind::Adding => TaskSpec::Adding { t },
            TaskKind::Copying => TaskSpec::Copying { t },
            TaskKind::Parenthesis => TaskSpec::Parenthesis {
                t,
                n_pairs: self.task.n_pairs,
                final_only: self.task.final_only,
            },
            TaskKind::Denoise => TaskSpec::Denoise {
                t,
                alphabet_n: self.task.alphabet_n,
            },
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let task = self.task_spec();
        let m = &self.model;
        NetworkSpec {
            variant: m.variant,
            input: task.input_dim(),
            hidden: m.hidden,
            output: task.output_dim(),
            ortho: m.ortho_set.clone(),
            num_neg: m.num_neg.unwrap_or(m.hidden / 2),
            neumann_order: m.neumann_order,
            reset_every: m.reset_every,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.optimizer.kind, self.optimizer.lr)
    }

    pub fn lr_a(&self) -> f64 {
        self.optimizer.lr_a.unwrap_or(self.optimizer.lr)
    }

    pub fn inverse_mode(&self) -> InverseMode {
        if self.model.exact_inverse_mode {
            InverseMode::Exact
        } else {
            InverseMode::Neumann
        }
    }

    /// Every check a run relies on; a config that passes never fails to start.
    pub fn validate(&self) -> Result<()> {
        self.task_spec().validate()?;
        self.network_spec().validate()?;
        if self.model.variant == Variant::Gru && !self.model.ortho_set.is_empty() {
            bail!("the plain GRU has no orthogonal weights; use variant \"ncgru\" with ortho_set");
        }
        let opt = self.optimizer_config();
        opt.validate()?;
        OptimizerConfig { learning_rate: self.lr_a(), ..opt }.validate()?;
        ensure!(self.train.batch_size > 0, "batch_size must be positive");
        ensure!(self.train.eval_every > 0, "eval_every must be positive");
        ensure!(self.train.eval_size > 0, "eval_size must be positive");
        ensure!(
            self.train.seed < u64::MAX,
            "seed must leave room for the evaluation seed (seed + 1)"
        );
        Ok(())
    }

    /// Named desk-scale preset.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |name: TaskKind, t: usize, model: ModelConfig, lr_a: Option<f64>, train: TrainConfig| {
            ExperimentConfig {
                task: TaskConfig { name, t, n_pairs: 10, alphabet_n: 10, final_only: false },
                model,
                optimizer: OptimizerSection { kind: OptimizerKind::Adam, lr: 1e-3, lr_a },
                train,
                output: OutputConfig {
                    directory: PathBuf::from("runs").join(name.name()),
                    record_wall_time: false,
                },
            }
        };
        let ncgru = |hidden, ortho_set: &[Gate], num_neg, reset_every| ModelConfig {
            variant: Variant::NcGru,
            hidden,
            ortho_set: ortho_set.to_vec(),
            num_neg: Some(num_neg),
            neumann_order: DEFAULT_NEUMANN_ORDER,
            reset_every,
            exact_inverse_mode: false,
        };
        let train = |iterations, batch_size, eval_every| TrainConfig {
            iterations,
            batch_size,
            eval_every,
            eval_size: default_eval_size(),
            seed: 0,
        };
        let rc = [Gate::Reset, Gate::Candidate];
        let cfg = match name {
            "adding" => base(
                TaskKind::Adding,
                100,
                ncgru(32, &[Gate::Candidate], 16, 50),
                None,
                train(5000, 50, 100),
            ),
            "parenthesis" => base(TaskKind::Parenthesis, 100, ncgru(49, &rc, 35, 50), None, train(3000, 16, 100)),
            "parenthesis-gru" => {
                let mut c = Self::preset("parenthesis")?;
                c.model = ModelConfig {
                    variant: Variant::Gru,
                    hidden: 42,
                    ortho_set: Vec::new(),
                    num_neg: None,
                    neumann_order: DEFAULT_NEUMANN_ORDER,
                    reset_every: DEFAULT_RESET_EVERY,
                    exact_inverse_mode: false,
                };
                c.output.directory = PathBuf::from("runs/parenthesis-gru");
                c
            }
            "denoise" => base(TaskKind::Denoise, 100, ncgru(64, &rc, 27, 50), None, train(2000, 32, 100)),
            "copying" => base(
                TaskKind::Copying,
                100,
                ncgru(64, &rc, 53, 20),
                Some(1e-4),
                train(3000, 50, 50),
            ),
            _ => bail!("unknown preset {name:?}; expected one of {:?}", PRESETS),
        };
        Ok(cfg)
    }
}

pub const PRESETS: [&str; 5] = ["adding", "parenthesis", "parenthesis-gru", "denoise", "copying"];
