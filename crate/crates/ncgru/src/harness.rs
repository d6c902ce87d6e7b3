//! Training loop, ablation arms and run directories.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};

use ncgru_core::cells::{Gate, Variant};
use ncgru_core::network::{Network, Trainer};
use ncgru_core::Error as CoreError;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::metrics::{MetricRow, MetricWriter};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.json";

/// A run stopped on a non-finite loss, gradient or update.
#[derive(Debug, Clone, PartialEq)]
pub struct Diverged {
    pub step: u64,
    pub reason: String,
}

impl fmt::Display for Diverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run diverged at step {}: {}", self.step, self.reason)
    }
}

impl std::error::Error for Diverged {}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricRow>,
    pub checkpoint: Checkpoint,
    /// Updates whose contraction norm reached 1.
    pub contraction_warnings: usize,
}

impl RunOutput {
    pub fn final_eval(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.eval_loss)
    }

    pub fn min_eval(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.eval_loss).reduce(f64::min)
    }

    pub fn max_contraction(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.contraction_norm).reduce(f64::max)
    }

    pub fn max_drift(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.drift).reduce(f64::max)
    }
}

/// Seed of the training batch drawn at iteration `k` (splitmix64 mixing).
pub fn batch_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `cfg` from scratch, passing every metric row to `sink` as it is
/// produced. The evaluation batch comes from `seed + 1` and is reused.
pub fn train(cfg: &ExperimentConfig, mut sink: impl FnMut(&MetricRow) -> Result<()>) -> Result<RunOutput> {
    cfg.validate()?;
    let task = cfg.task_spec();
    let spec = cfg.network_spec();
    let seed = cfg.train.seed;
    let mut net = Network::init(&spec, seed)?;
    let mut trainer = Trainer::new(&net, cfg.optimizer_config(), cfg.lr_a(), cfg.inverse_mode())?;
    let eval = task.generate(cfg.train.eval_size, seed + 1)?;
    let has_ortho = !net.ortho.is_empty();
    let start = Instant::now();
    let wall = |record: bool| record.then(|| start.elapsed().as_millis() as u64);

    let mut rows = Vec::with_capacity(cfg.train.iterations as usize);
    let mut contraction_warnings = 0;
    for k in 1..=cfg.train.iterations {
        let batch = task.generate(cfg.train.batch_size, batch_seed(seed, k))?;
        let report = match trainer.step(&mut net, &batch) {
            Ok(r) => r,
            Err(CoreError::Numeric(what)) => {
                let row = MetricRow {
                    step: k,
                    train_loss: f64::NAN,
                    eval_loss: None,
                    drift: has_ortho.then(|| net.max_drift()),
                    contraction_norm: None,
                    wall_ms: wall(cfg.output.record_wall_time),
                };
                sink(&row)?;
                return Err(Diverged { step: k, reason: format!("non-finite {what}") }.into());
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(c) = report.contraction_norm.filter(|&c| c >= 1.0) {
            contraction_warnings += 1;
            warn!("step {k}: contraction norm {c:.3e} >= 1, series outside its convergence region");
        }
        let eval_loss = if k % cfg.train.eval_every == 0 || k == cfg.train.iterations {
            let l = net.loss(&eval)?;
            info!("step {k}: train {:.6} eval {l:.6}", report.loss);
            Some(l)
        } else {
            None
        };
        let row = MetricRow {
            step: k,
            train_loss: report.loss,
            eval_loss,
            drift: has_ortho.then_some(report.drift),
            contraction_norm: report.contraction_norm,
            wall_ms: wall(cfg.output.record_wall_time),
        };
        sink(&row)?;
        rows.push(row);
    }
    let checkpoint = Checkpoint::new(cfg.train.iterations, cfg, &net, &trainer);
    Ok(RunOutput { rows, checkpoint, contraction_warnings })
}

/// [`train`] writing `config.json`, `metrics.csv` and `checkpoint.json`
/// into `dir`.
pub fn run_training(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_json())?;
    let mut writer = MetricWriter::create(&dir.join(METRICS_FILE))?;
    let out = train(cfg, |row| writer.write(row))?;
    writer.into_inner()?;
    out.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// Neumann orders 1, 2, 3 against an exact inverse at every update.
    NeumannVsInverse,
    /// Orthogonal `U_c`; `U_r, U_c`; `U_r, U_u, U_c`.
    OrthoPlacement,
    /// A single run whose contraction norms are checked against 1.
    NormMonitor,
}

impl AblationMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "neumann-vs-inverse" => AblationMode::NeumannVsInverse,
            "ortho-placement" => AblationMode::OrthoPlacement,
            "norm-monitor" => AblationMode::NormMonitor,
            _ => bail!("unknown ablation mode {s:?}; expected neumann-vs-inverse, ortho-placement or norm-monitor"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub label: String,
    pub config: ExperimentConfig,
}

/// The configurations of one ablation, all sharing `cfg`'s seed.
pub fn ablation_arms(mode: AblationMode, cfg: &ExperimentConfig) -> Result<Vec<Arm>> {
    if cfg.model.variant != Variant::NcGru {
        bail!("ablations need an NC-GRU model");
    }
    let arm = |label: &str, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = cfg.clone();
        f(&mut c);
        c.output.directory = cfg.output.directory.join(label);
        Arm { label: label.to_string(), config: c }
    };
    let arms = match mode {
        AblationMode::NeumannVsInverse => {
            if cfg.model.ortho_set.is_empty() {
                bail!("neumann-vs-inverse needs at least one orthogonal weight");
            }
            let mut arms: Vec<Arm> = (1..=3)
                .map(|p| {
                    arm(&format!("order{p}"), &|c| {
                        c.model.neumann_order = p;
                        c.model.exact_inverse_mode = false;
                    })
                })
                .collect();
            arms.push(arm("inverse", &|c| c.model.exact_inverse_mode = true));
            arms
        }
        AblationMode::OrthoPlacement => [
            ("c", vec![Gate::Candidate]),
            ("r-c", vec![Gate::Reset, Gate::Candidate]),
            ("r-u-c", vec![Gate::Reset, Gate::Update, Gate::Candidate]),
        ]
        .into_iter()
        .map(|(label, set)| arm(label, &|c| c.model.ortho_set = set.clone()))
        .collect(),
        AblationMode::NormMonitor => {
            if cfg.model.ortho_set.is_empty() || cfg.model.exact_inverse_mode {
                bail!("norm-monitor needs Neumann updates of at least one orthogonal weight");
            }
            vec![arm("monitor", &|_| {})]
        }
    };
    for a in &arms {
        a.config.validate().with_context(|| format!("arm {}", a.label))?;
    }
    Ok(arms)
}

/// Runs every arm in sequence; with `dir`, each arm writes into `dir/<label>`.
pub fn run_ablation(mode: AblationMode, cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Vec<(Arm, RunOutput)>> {
    let arms = ablation_arms(mode, cfg)?;
    let mut out = Vec::with_capacity(arms.len());
    for arm in arms {
        info!("ablation arm {}", arm.label);
        let run = match dir {
            Some(d) => run_training(&arm.config, &d.join(&arm.label)),
            None => train(&arm.config, |_| Ok(())),
        }
        .with_context(|| format!("arm {}", arm.label))?;
        out.push((arm, run));
    }
    Ok(out)
}

/// Output directory for a run, preferring an explicit override.
pub fn output_dir(cfg: &ExperimentConfig, over: Option<PathBuf>) -> PathBuf {
    over.unwrap_or_else(|| cfg.output.directory.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::preset("adding").unwrap();
        c.task.t = 8;
        c.model.hidden = 6;
        c.model.num_neg = Some(3);
        c.model.reset_every = 4;
        c.train.iterations = 12;
        c.train.batch_size = 4;
        c.train.eval_every = 5;
        c.train.eval_size = 8;
        c
    }

    #[test]
    fn eval_cadence_and_columns() {
        let out = train(&tiny(), |_| Ok(())).unwrap();
        let steps: Vec<u64> = out.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, (1..=12).collect::<Vec<_>>());
        let evals: Vec<u64> = out.rows.iter().filter(|r| r.eval_loss.is_some()).map(|r| r.step).collect();
        assert_eq!(evals, vec![5, 10, 12]);
        assert!(out.rows.iter().all(|r| r.drift.is_some() && r.contraction_norm.is_some() && r.wall_ms.is_none()));
        assert_eq!(out.checkpoint.step, 12);
    }

    #[test]
    fn zero_iterations_yield_initial_checkpoint() {
        let mut c = tiny();
        c.train.iterations = 0;
        let out = train(&c, |_| Ok(())).unwrap();
        assert!(out.rows.is_empty());
        let init = Network::init(&c.network_spec(), c.train.seed).unwrap();
        assert_eq!(out.checkpoint.network, init);
    }

    #[test]
    fn gru_rows_leave_ortho_columns_empty() {
        let mut c = tiny();
        c.model.variant = Variant::Gru;
        c.model.ortho_set.clear();
        let out = train(&c, |_| Ok(())).unwrap();
        assert!(out.rows.iter().all(|r| r.drift.is_none() && r.contraction_norm.is_none()));
    }

    #[test]
    fn divergence_emits_diagnostic_row() {
        let mut c = tiny();
        c.optimizer.lr = 1e300;
        c.optimizer.kind = ncgru_core::optim::OptimizerKind::Sgd;
        let mut seen = Vec::new();
        let err = train(&c, |r| {
            seen.push(r.clone());
            Ok(())
        })
        .unwrap_err();
        let d = err.downcast_ref::<Diverged>().expect("divergence error");
        let last = seen.last().unwrap();
        assert_eq!(last.step, d.step);
        assert!(last.train_loss.is_nan());
    }

    #[test]
    fn ablation_arms_share_seed() {
        let c = tiny();
        let arms = ablation_arms(AblationMode::NeumannVsInverse, &c).unwrap();
        let labels: Vec<&str> = arms.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(labels, ["order1", "order2", "order3", "inverse"]);
        assert!(arms.iter().all(|a| a.config.train.seed == c.train.seed));
        let placement = ablation_arms(AblationMode::OrthoPlacement, &c).unwrap();
        assert_eq!(placement.len(), 3);
        assert_eq!(placement[2].config.model.ortho_set.len(), 3);
        let mut gru = c.clone();
        gru.model.variant = Variant::Gru;
        gru.model.ortho_set.clear();
        assert!(ablation_arms(AblationMode::NormMonitor, &gru).is_err());
        assert!(AblationMode::parse("placement").is_err());
    }

    #[test]
    fn batch_seeds_differ() {
        let s: Vec<u64> = (1..100).map(|k| batch_seed(7, k)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), s.len());
        assert!(!s.contains(&8));
    }
}
