//! Central-difference checks of the hand-derived gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{
    cell_backward, forward, forward_sequence, sequence_bptt, sequence_loss, CellParams, Readout, SequenceTarget,
    Variant, KINK_TOL,
};
use crate::linalg::{dot, Matrix};
use crate::orthocore::{cayley_transform, init_skew, make_scaling, SkewOrthogonal};
use crate::{Error, Result};

pub const CELL_TOL: f64 = 1e-5;
pub const CAYLEY_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Cell,
    Cayley,
    Bptt,
}

impl Scope {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(Scope::Cell),
            "cayley" => Ok(Scope::Cayley),
            "bptt" => Ok(Scope::Bptt),
            _ => Err(Error::Contract(format!("unknown gradcheck scope {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::Cell => "cell",
            Scope::Cayley => "cayley",
            Scope::Bptt => "bptt",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Scope::Cayley => CAYLEY_TOL,
            _ => CELL_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sizes {
    pub hidden: usize,
    pub input: usize,
    pub length: usize,
    pub instances: usize,
}

impl Sizes {
    pub fn default_for(scope: Scope) -> Self {
        match scope {
            Scope::Cayley => Sizes { hidden: 6, input: 0, length: 0, instances: 20 },
            _ => Sizes { hidden: 4, input: 3, length: 5, instances: 5 },
        }
    }

    fn validate(&self, scope: Scope) -> Result<()> {
        let small = self.hidden <= 8 && self.input <= 8 && self.length <= 10;
        let needs_input = scope != Scope::Cayley;
        if !small || self.hidden < 2 || self.instances == 0 || (needs_input && (self.input == 0 || self.length == 0)) {
            return Err(Error::Size(format!("gradcheck sizes out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Worst relative error of one named gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scope: Scope,
    pub tolerance: f64,
    pub checks: Vec<Check>,
    /// Largest gradient entry produced by a zero upstream gradient (cell scope).
    pub zero_upstream_max: Option<f64>,
}

impl Report {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance && self.zero_upstream_max.is_none_or(|z| z == 0.0)
    }

    fn record(&mut self, name: String, rel_err: f64) {
        match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => c.rel_err = c.rel_err.max(rel_err),
            None => self.checks.push(Check { name, rel_err }),
        }
    }
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
    let scale = libm::sqrt(dot(a, a)) + libm::sqrt(dot(b, b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn run_gradcheck(scope: Scope, sizes: Sizes, seed: u64) -> Result<Report> {
    sizes.validate(scope)?;
    let mut report = Report {
        scope,
        tolerance: scope.tolerance(),
        checks: Vec::new(),
        zero_upstream_max: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..sizes.instances {
        match scope {
            Scope::Cell => {
                for v in [Variant::Gru, Variant::NcGru] {
                    check_cell(v, sizes, &mut rng, &mut report)?;
                }
            }
            Scope::Bptt => {
                for v in [Variant::Gru, Variant::NcGru] {
                    check_bptt(v, sizes, &mut rng, &mut report)?;
                }
            }
            Scope::Cayley => check_cayley(sizes.hidden, &mut rng, &mut report)?,
        }
    }
    Ok(report)
}

fn uniform(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_cell(v: Variant, sizes: Sizes, rng: &mut ChaCha8Rng) -> CellParams {
    let mut p = CellParams::random(v, sizes.hidden, sizes.input, rng);
    for (_, b) in p.tensors_mut().into_iter().skip(6) {
        b.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
    p
}

/// Central differences of `f` over every entry of every cell tensor.
fn fd_tensors(p: &CellParams, f: &dyn Fn(&CellParams) -> Result<f64>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(9);
    for k in 0..9 {
        let len = p.tensors()[k].1.len();
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut plus = p.clone();
            plus.tensors_mut()[k].1[i] += FD_STEP;
            let mut minus = p.clone();
            minus.tensors_mut()[k].1[i] -= FD_STEP;
            *gi = (f(&plus)? - f(&minus)?) / (2.0 * FD_STEP);
        }
        out.push(g);
    }
    Ok(out)
}

fn label(v: Variant) -> &'static str {
    match v {
        Variant::Gru => "gru",
        Variant::NcGru => "ncgru",
    }
}

fn check_cell(v: Variant, sizes: Sizes, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<()> {
    let (p, x, h) = loop {
        let p = random_cell(v, sizes, rng);
        let x = uniform(sizes.input, 1.0, rng);
        let h = uniform(sizes.hidden, 1.0, rng);
        if !forward(&p, &x, &h)?.1.near_kink(&p, KINK_TOL) {
            break (p, x, h);
        }
    };
    let w = uniform(sizes.hidden, 1.0, rng);
    let (_, cache) = forward(&p, &x, &h)?;
    let (grads, grad_prev) = cell_backward(&p, &cache, &w)?;
    let loss = |q: &CellParams, hp: &[f64]| -> Result<f64> { Ok(dot(&forward(q, &x, hp)?.0, &w)) };
    let numeric = fd_tensors(&p, &|q| loss(q, &h))?;
    for ((name, analytic), num) in grads.tensors().iter().zip(&numeric) {
        report.record(format!("{}.{name}", label(v)), rel_err(analytic, num));
    }
    let mut num_prev = vec![0.0; h.len()];
    for (i, g) in num_prev.iter_mut().enumerate() {
        let (mut hp, mut hm) = (h.clone(), h.clone());
        hp[i] += FD_STEP;
        hm[i] -= FD_STEP;
        *g = (loss(&p, &hp)? - loss(&p, &hm)?) / (2.0 * FD_STEP);
    }
    report.record(format!("{}.h_prev", label(v)), rel_err(&grad_prev, &num_prev));

    let (zero, zero_prev) = cell_backward(&p, &cache, &vec![0.0; sizes.hidden])?;
    let zmax = zero
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .chain(zero_prev.iter())
        .fold(0.0f64, |m, g| m.max(g.abs()));
    report.zero_upstream_max = Some(report.zero_upstream_max.unwrap_or(0.0).max(zmax));
    Ok(())
}

fn check_bptt(v: Variant, sizes: Sizes, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<()> {
    let classes = 3;
    let (p, inputs) = loop {
        let p = random_cell(v, sizes, rng);
        let inputs = Matrix::from_fn(sizes.length, sizes.input, |_, _| rng.gen_range(-1.0..1.0));
        if !forward_sequence(&p, &inputs)?.iter().any(|c| c.near_kink(&p, KINK_TOL)) {
            break (p, inputs);
        }
    };
    let r = Readout::random(classes, sizes.hidden, rng);
    let target = SequenceTarget::Classes((0..sizes.length).map(|_| rng.gen_range(0..classes)).collect());
    let g = sequence_bptt(&p, &r, &inputs, &target)?;
    let numeric = fd_tensors(&p, &|q| sequence_loss(q, &r, &inputs, &target))?;
    for ((name, analytic), num) in g.cell.tensors().iter().zip(&numeric) {
        report.record(format!("{}.{name}", label(v)), rel_err(analytic, num));
    }
    let mut num_w = vec![0.0; r.w.as_slice().len()];
    for (i, gi) in num_w.iter_mut().enumerate() {
        let (mut rp, mut rm) = (r.clone(), r.clone());
        rp.w.as_mut_slice()[i] += FD_STEP;
        rm.w.as_mut_slice()[i] -= FD_STEP;
        *gi = (sequence_loss(&p, &rp, &inputs, &target)? - sequence_loss(&p, &rm, &inputs, &target)?) / (2.0 * FD_STEP);
    }
    report.record(format!("{}.readout.w", label(v)), rel_err(g.readout.w.as_slice(), &num_w));
    Ok(())
}

fn check_cayley(n: usize, rng: &mut ChaCha8Rng, report: &mut Report) -> Result<()> {
    let a = init_skew(n, rng.gen())?;
    let d = make_scaling(n, rng.gen_range(0..=n))?;
    let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let skew = SkewOrthogonal::new(a.clone(), d.clone(), 2, 0)?;
    let analytic = skew.grad_pullback(&g)?;
    let loss = |a: &Matrix| -> Result<f64> { Ok(dot(cayley_transform(a, &d)?.as_slice(), g.as_slice())) };
    let (mut got, mut want) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[(i, j)] += FD_STEP;
            ap[(j, i)] -= FD_STEP;
            am[(i, j)] -= FD_STEP;
            am[(j, i)] += FD_STEP;
            want.push((loss(&ap)? - loss(&am)?) / (2.0 * FD_STEP));
            got.push(analytic[(i, j)]);
        }
    }
    report.record(format!("pullback n={n}"), rel_err(&got, &want));
    Ok(())
}
