//! Generators for the four synthetic sequence benchmarks.
//!
//! Every generator is a pure function of its arguments: one ChaCha8 stream
//! seeded with `seed` produces the samples in order. The `*_sample`
//! functions draw one sample in symbolic form from a caller-owned stream,
//! which keeps large-`T` statistics cheap.
//!
//! | task        | input                          | output                  | loss               |
//! |-------------|--------------------------------|-------------------------|--------------------|
//! | adding      | `T × 2` marks and values       | sum of marked values    | MSE, last step     |
//! | copying     | `T+20` one-hot over `0..=9`    | digit per step          | CE, every step     |
//! | parenthesis | `T` one-hot over brackets+noise| unmatched count `0..=10`| CE, every step     |
//! | denoise     | `T+10` one-hot over data+2     | data symbol or blank    | CE, every step     |

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{LossKind, SequenceTarget};
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// Digits replayed in the copying task.
pub const COPY_DIGITS: usize = 10;
/// Copying alphabet: blank `0`, data `1..=8`, marker `9`.
pub const COPY_SYMBOLS: usize = 10;
pub const COPY_MARKER: usize = 9;
/// Data points hidden in a denoise stream.
pub const DENOISE_POINTS: usize = 10;
/// Largest unmatched-bracket count; the parenthesis output has `PAREN_CAP + 1` classes.
pub const PAREN_CAP: usize = 10;
pub const MAX_PAREN_TYPES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TaskKind {
    Adding,
    Copying,
    Parenthesis,
    Denoise,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Adding => "adding",
            TaskKind::Copying => "copying",
            TaskKind::Parenthesis => "parenthesis",
            TaskKind::Denoise => "denoise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adding" => Ok(TaskKind::Adding),
            "copying" => Ok(TaskKind::Copying),
            "parenthesis" => Ok(TaskKind::Parenthesis),
            "denoise" => Ok(TaskKind::Denoise),
            _ => Err(Error::Contract(format!("unknown task {s:?}"))),
        }
    }
}

/// A task with its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskSpec {
    Adding { t: usize },
    Copying { t: usize },
    Parenthesis { t: usize, n_pairs: usize, final_only: bool },
    Denoise { t: usize, alphabet_n: usize },
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Adding { .. } => TaskKind::Adding,
            TaskSpec::Copying { .. } => TaskKind::Copying,
            TaskSpec::Parenthesis { .. } => TaskKind::Parenthesis,
            TaskSpec::Denoise { .. } => TaskKind::Denoise,
        }
    }

    pub fn t(&self) -> usize {
        match *self {
            TaskSpec::Adding { t }
            | TaskSpec::Copying { t }
            | TaskSpec::Parenthesis { t, .. }
            | TaskSpec::Denoise { t, .. } => t,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            TaskSpec::Adding { .. } => 2,
            TaskSpec::Copying { .. } => COPY_SYMBOLS,
            TaskSpec::Parenthesis { n_pairs, .. } => 2 * n_pairs + 1,
            TaskSpec::Denoise { alphabet_n, .. } => alphabet_n + 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            TaskSpec::Adding { .. } => 1,
            TaskSpec::Copying { .. } => COPY_SYMBOLS,
            TaskSpec::Parenthesis { .. } => PAREN_CAP + 1,
            TaskSpec::Denoise { alphabet_n, .. } => alphabet_n + 1,
        }
    }

    pub fn seq_len(&self) -> usize {
        match *self {
            TaskSpec::Adding { t } | TaskSpec::Parenthesis { t, .. } => t,
            TaskSpec::Copying { t } => t + 2 * COPY_DIGITS,
            TaskSpec::Denoise { t, .. } => t + DENOISE_POINTS,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            TaskSpec::Adding { .. } => LossKind::Mse,
            _ => LossKind::CrossEntropy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TaskSpec::Adding { t } if t < 2 => Err(Error::Range(format!("adding needs T >= 2, got {t}"))),
            TaskSpec::Copying { t } if t < 1 => Err(Error::Range("copying needs T >= 1".into())),
            TaskSpec::Parenthesis { t, n_pairs, .. } if t < 1 || n_pairs == 0 || n_pairs > MAX_PAREN_TYPES => {
                Err(Error::Range(format!(
                    "parenthesis needs T >= 1 and 1..={MAX_PAREN_TYPES} pair types, got T={t}, {n_pairs}"
                )))
            }
            TaskSpec::Denoise { t, alphabet_n } if t <= DENOISE_POINTS || alphabet_n < 2 => Err(Error::Range(
                format!("denoise needs T >= 11 and at least 2 symbols, got T={t}, n={alphabet_n}"),
            )),
            _ => Ok(()),
        }
    }

    /// `count` samples drawn from one stream seeded with `seed`.
    pub fn generate(&self, count: usize, seed: u64) -> Result<TaskBatch> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(count);
        let mut targets = Vec::with_capacity(count);
        for _ in 0..count {
            let (x, y) = self.sample(&mut rng);
            inputs.push(x);
            targets.push(y);
        }
        Ok(TaskBatch {
            inputs,
            targets,
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            loss_kind: self.loss_kind(),
            meta: TaskMeta {
                task: self.kind(),
                t: self.t(),
                seed,
            },
        })
    }

    /// One encoded sample. The spec must be valid.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Matrix, SequenceTarget) {
        match *self {
            TaskSpec::Adding { t } => {
                let s = adding_sample(t, rng);
                let mut x = Matrix::zeros(t, 2);
                for (i, &v) in s.values.iter().enumerate() {
                    x[(i, 1)] = v;
                }
                x[(s.marks[0], 0)] = 1.0;
                x[(s.marks[1], 0)] = 1.0;
                (x, SequenceTarget::Regression(Vector::from(vec![s.target()])))
            }
            TaskSpec::Copying { t } => {
                let (input, target) = copying_sample(t, rng);
                (one_hot(&input, COPY_SYMBOLS), SequenceTarget::Classes(target))
            }
            TaskSpec::Parenthesis { t, n_pairs, final_only } => {
                let input = parenthesis_sample(t, n_pairs, rng);
                let counts = paren_counts(&input, n_pairs);
                let target = if final_only {
                    SequenceTarget::FinalClass(*counts.last().unwrap_or(&0))
                } else {
                    SequenceTarget::Classes(counts)
                };
                (one_hot(&input, 2 * n_pairs + 1), target)
            }
            TaskSpec::Denoise { t, alphabet_n } => {
                let (input, target) = denoise_sample(t, alphabet_n, rng);
                (one_hot(&input, alphabet_n + 2), SequenceTarget::Classes(target))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskMeta {
    pub task: TaskKind,
    pub t: usize,
    pub seed: u64,
}

/// Encoded samples; `inputs[k]` has one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub inputs: Vec<Matrix>,
    pub targets: Vec<SequenceTarget>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub loss_kind: LossKind,
    pub meta: TaskMeta,
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Target of sample `k` as rows: one-hot rows for class targets, a
    /// single row for regression.
    pub fn target_rows(&self, k: usize) -> Vec<Vec<f64>> {
        match &self.targets[k] {
            SequenceTarget::Regression(v) => vec![v.to_vec()],
            SequenceTarget::Classes(cs) => cs.iter().map(|&c| one_hot_row(c, self.output_dim)).collect(),
            SequenceTarget::FinalClass(c) => vec![one_hot_row(*c, self.output_dim)],
        }
    }

    pub fn describe(&self) -> String {
        format!("{} T={} seed={} ({} samples)", self.meta.task.name(), self.meta.t, self.meta.seed, self.len())
    }
}

fn one_hot_row(c: usize, k: usize) -> Vec<f64> {
    let mut row = vec![0.0; k];
    row[c] = 1.0;
    row
}

/// One row per symbol with a single 1.
pub fn one_hot(symbols: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(symbols.len(), k);
    for (t, &s) in symbols.iter().enumerate() {
        m[(t, s)] = 1.0;
    }
    m
}

pub fn gen_adding(t: usize, n: usize, seed: u64) -> Result<TaskBatch> {
    TaskSpec::Adding { t }.generate(n, seed)
}

pub fn gen_copying(t: usize, n: usize, seed: u64) -> Result<TaskBatch> {
    TaskSpec::Copying { t }.generate(n, seed)
}

pub fn gen_parenthesis(t: usize, n_pairs: usize, n: usize, seed: u64) -> Result<TaskBatch> {
    TaskSpec::Parenthesis { t, n_pairs, final_only: false }.generate(n, seed)
}

pub fn gen_denoise(t: usize, alphabet_n: usize, n: usize, seed: u64) -> Result<TaskBatch> {
    TaskSpec::Denoise { t, alphabet_n }.generate(n, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddingSample {
    pub values: Vec<f64>,
    /// One position in `[0, T/2)`, one in `[T/2, T)`.
    pub marks: [usize; 2],
}

impl AddingSample {
    pub fn target(&self) -> f64 {
        self.values[self.marks[0]] + self.values[self.marks[1]]
    }
}

pub fn adding_sample<R: Rng>(t: usize, rng: &mut R) -> AddingSample {
    let half = t / 2;
    let values = (0..t).map(|_| rng.gen::<f64>()).collect();
    let marks = [rng.gen_range(0..half), rng.gen_range(half..t)];
    AddingSample { values, marks }
}

/// `(input, target)` symbols: ten digits from `1..=8`, `T` blanks, the
/// marker, nine blanks; the target is blank except for the last ten steps,
/// which replay the digits.
pub fn copying_sample<R: Rng>(t: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let len = t + 2 * COPY_DIGITS;
    let digits: Vec<usize> = (0..COPY_DIGITS).map(|_| rng.gen_range(1..=8)).collect();
    let mut input = vec![0; len];
    input[..COPY_DIGITS].copy_from_slice(&digits);
    input[t + COPY_DIGITS] = COPY_MARKER;
    let mut target = vec![0; len];
    target[len - COPY_DIGITS..].copy_from_slice(&digits);
    (input, target)
}

/// `10·ln 8 / (T + 20)`
pub fn copying_baseline(t: usize) -> f64 {
    COPY_DIGITS as f64 * libm::log(8.0) / (t + 2 * COPY_DIGITS) as f64
}

/// Output distribution of the memoryless copying strategy at `step`: blank
/// before the marker, uniform over `1..=8` from the marker on.
pub fn copying_memoryless(t: usize, step: usize) -> [f64; COPY_SYMBOLS] {
    let mut p = [0.0; COPY_SYMBOLS];
    if step < t + COPY_DIGITS {
        p[0] = 1.0;
    } else {
        p[1..=8].iter_mut().for_each(|v| *v = 0.125);
    }
    p
}

/// Mean per-step cross-entropy of the memoryless strategy over `samples`
/// generated sequences.
pub fn copying_memoryless_loss(t: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut steps = 0usize;
    for _ in 0..samples {
        let (_, target) = copying_sample(t, &mut rng);
        for (step, &y) in target.iter().enumerate() {
            total -= libm::log(copying_memoryless(t, step)[y]);
        }
        steps += target.len();
    }
    total / steps as f64
}

/// Bracket stream over symbols `2j` (open of type `j`), `2j + 1` (close of
/// type `j`) and `2·n_pairs` (noise).
///
/// `min(n_pairs, T/2)` pairs get uniform types. Their `2k` events occupy
/// uniformly random distinct positions in a uniformly random order, subject
/// only to each pair opening before it closes.
pub fn parenthesis_sample<R: Rng>(t: usize, n_pairs: usize, rng: &mut R) -> Vec<usize> {
    let noise = 2 * n_pairs;
    let k = n_pairs.min(t / 2);
    let mut positions = sample_indices(rng, t, 2 * k).into_vec();
    positions.sort_unstable();
    let mut slots: Vec<usize> = (0..2 * k).collect();
    slots.shuffle(rng);
    let mut stream = vec![noise; t];
    for pair in 0..k {
        let ty = rng.gen_range(0..n_pairs);
        let (a, b) = (slots[2 * pair], slots[2 * pair + 1]);
        stream[positions[a.min(b)]] = 2 * ty;
        stream[positions[a.max(b)]] = 2 * ty + 1;
    }
    stream
}

/// Unmatched-open count after each step, capped at [`PAREN_CAP`].
pub fn paren_counts(stream: &[usize], n_pairs: usize) -> Vec<usize> {
    let mut open = 0usize;
    stream
        .iter()
        .map(|&s| {
            if s < 2 * n_pairs {
                if s % 2 == 0 {
                    open += 1;
                } else {
                    open = open.saturating_sub(1);
                }
            }
            open.min(PAREN_CAP)
        })
        .collect()
}

/// `(input, target)` symbols. Input: `T` steps of noise (`n`) with ten data
/// symbols from `0..n` at distinct positions, the marker (`n + 1`), nine
/// noise steps. Target: blank (`n`) until the marker, then the data symbols
/// in order.
pub fn denoise_sample<R: Rng>(t: usize, n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let (noise, marker) = (n, n + 1);
    let len = t + DENOISE_POINTS;
    let mut positions = sample_indices(rng, t, DENOISE_POINTS).into_vec();
    positions.sort_unstable();
    let mut input = vec![noise; len];
    let mut target = vec![n; len];
    for (k, &pos) in positions.iter().enumerate() {
        let s = rng.gen_range(0..n);
        input[pos] = s;
        target[t + k] = s;
    }
    input[t] = marker;
    (input, target)
}
