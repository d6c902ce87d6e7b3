//! Acceptance suite. Every criterion prints one PASS or FAIL line; the process
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ncgru::config::ExperimentConfig;
use ncgru::harness::{run_training, METRICS_FILE};
use ncgru::RunOutput;
use ncgru_core::bounds::{compute_bound, force_gates, forcing_magnitude, saturation_sweep, SaturationRegime, SATURATION_TOL};
use ncgru_core::cells::{forward, forward_sequence, jacobian_h, CellParams, Gate, Readout, SequenceTarget, StepCache, Variant, KINK_TOL};
use ncgru_core::cells::sequence_bptt;
use ncgru_core::linalg::Matrix;
use ncgru_core::network::{InverseMode, Network, NetworkSpec, Trainer};
use ncgru_core::optim::{OptimizerConfig, OptimizerState};
use ncgru_core::orthocore::{cayley_transform, make_scaling, SkewOrthogonal};
use ncgru_core::tasks::{copying_baseline, copying_memoryless_loss, gen_copying, TaskSpec, COPY_MARKER};
use ncgru_verify as oracle;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict { pass, detail: detail.into() })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_skew(n: usize, scale: f64, r: &mut ChaCha8Rng) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = r.gen_range(-scale..scale);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    a
}

fn orthogonal(n: usize, r: &mut ChaCha8Rng) -> Result<Matrix> {
    let a = random_skew(n, 1.0, r);
    Ok(cayley_transform(&a, &make_scaling(n, r.gen_range(0..=n))?)?)
}

fn random_cell(variant: Variant, n: usize, m: usize, weight_scale: f64, r: &mut ChaCha8Rng) -> CellParams {
    let mut p = CellParams::random(variant, n, m, r);
    for (_, t) in p.tensors_mut().into_iter().take(6) {
        t.iter_mut().for_each(|v| *v *= weight_scale);
    }
    for i in 0..n {
        p.b_r[i] = r.gen_range(-0.5..0.5);
        p.b_u[i] = r.gen_range(-0.5..0.5);
        p.b_c[i] = match variant {
            Variant::Gru => r.gen_range(-0.5..0.5),
            Variant::NcGru => r.gen_range(-0.3..0.1),
        };
    }
    p
}

fn c1_cayley_orthogonality() -> Result<Verdict> {
    let mut worst_ratio = 0.0f64;
    let mut r = rng(1);
    for n in [2, 16, 64, 128] {
        for seed in 0..20u64 {
            let mut rs = rng(seed.wrapping_mul(977) + n as u64);
            let a = random_skew(n, 1.0, &mut rs);
            let d = make_scaling(n, r.gen_range(0..=n))?;
            let u = cayley_transform(&a, &d)?;
            let defect = oracle::orthogonality_defect(&oracle::dense(&u));
            worst_ratio = worst_ratio.max(defect / (1e-10 * n as f64));
        }
    }
    verdict(worst_ratio < 1.0, format!("worst ‖UᵀU−I‖_F / (1e-10·n) = {worst_ratio:.3e}"))
}

fn c2_pullback() -> Result<Verdict> {
    let step = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let mut r = rng(100 + k);
        let n = 2 + (k as usize % 7);
        let a = random_skew(n, 1.0, &mut r);
        let num_neg = r.gen_range(0..=n);
        let d = make_scaling(n, num_neg)?;
        let g = Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let analytic = SkewOrthogonal::new(a.clone(), d.clone(), 2, 50)?.grad_pullback(&g)?;
        let gd = oracle::dense(&g);
        let loss = |a: &oracle::Dense| -> f64 {
            let u = oracle::cayley(a, d.as_slice());
            u.iter().flatten().zip(gd.iter().flatten()).map(|(x, y)| x * y).sum()
        };
        let base = oracle::dense(&a);
        let mut numeric = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let fd = oracle::central_difference(
                    |s| {
                        let mut p = base.clone();
                        p[i][j] += s;
                        p[j][i] -= s;
                        loss(&p)
                    },
                    step,
                );
                numeric[i * n + j] = fd;
                numeric[j * n + i] = -fd;
            }
        }
        worst = worst.max(oracle::rel_err(analytic.as_slice(), &numeric));
    }
    verdict(worst < 1e-6, format!("max rel err {worst:.3e} over 20 instances, n in 2..=8"))
}

fn kink_free(p: &CellParams, inputs: &Matrix) -> Result<bool> {
    Ok(!forward_sequence(p, inputs)?.iter().any(|c| c.near_kink(p, KINK_TOL)))
}

fn c3_bptt() -> Result<Verdict> {
    let (n, m, len, k) = (4, 3, 5, 3);
    let step = 1e-6;
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    let mut checked = 0;
    for variant in [Variant::Gru, Variant::NcGru] {
        let mut r = rng(300 + variant as u64);
        let mut instances = 0;
        while instances < 6 {
            let p = random_cell(variant, n, m, 2.0, &mut r);
            let ro = Readout::random(k, n, &mut r);
            let inputs = Matrix::from_fn(len, m, |_, _| r.gen_range(-1.0..1.0));
            if !kink_free(&p, &inputs)? {
                continue;
            }
            let target = match instances % 3 {
                0 => SequenceTarget::Classes((0..len).map(|_| r.gen_range(0..k)).collect()),
                1 => SequenceTarget::FinalClass(r.gen_range(0..k)),
                _ => SequenceTarget::Regression((0..k).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<_>>().into()),
            };
            let g = sequence_bptt(&p, &ro, &inputs, &target)?;
            let oracle_loss = oracle::sequence_loss(&p, &ro.w, &ro.b, &inputs, &target);
            ensure!((oracle_loss - g.loss).abs() < 1e-12, "loss mismatch {} vs {}", oracle_loss, g.loss);

            let analytic = g.cell.tensors();
            for (idx, (name, grad)) in analytic.iter().enumerate() {
                let mut numeric = vec![0.0; grad.len()];
                for (e, slot) in numeric.iter_mut().enumerate() {
                    *slot = oracle::central_difference(
                        |s| {
                            let mut q = p.clone();
                            q.tensors_mut()[idx].1[e] += s;
                            oracle::sequence_loss(&q, &ro.w, &ro.b, &inputs, &target)
                        },
                        step,
                    );
                }
                let e = oracle::rel_err(grad, &numeric);
                checked += 1;
                if e > worst {
                    worst = e;
                    worst_name = format!("{variant:?} {name}");
                }
            }
            for (name, grad, which) in [("readout w", g.readout.w.as_slice(), 0), ("readout b", &g.readout.b[..], 1)] {
                let mut numeric = vec![0.0; grad.len()];
                for (e, slot) in numeric.iter_mut().enumerate() {
                    *slot = oracle::central_difference(
                        |s| {
                            let mut q = ro.clone();
                            if which == 0 {
                                q.w.as_mut_slice()[e] += s;
                            } else {
                                q.b[e] += s;
                            }
                            oracle::sequence_loss(&p, &q.w, &q.b, &inputs, &target)
                        },
                        step,
                    );
                }
                let e = oracle::rel_err(grad, &numeric);
                checked += 1;
                if e > worst {
                    worst = e;
                    worst_name = format!("{variant:?} {name}");
                }
            }
            instances += 1;
        }
    }
    verdict(worst < 1e-5, format!("max rel err {worst:.3e} ({worst_name}) over {checked} tensors"))
}

fn c4_neumann_order() -> Result<Verdict> {
    let n = 16;
    let scales = [1.0, 0.5, 0.25, 0.125];
    let mut slopes = Vec::new();
    let mut r = rng(400);
    let a = random_skew(n, 0.5, &mut r);
    let delta = random_skew(n, 1.0, &mut r);
    let d = make_scaling(n, n / 2)?;
    let base = SkewOrthogonal::new(a, d, 1, 0)?;
    let atd = oracle::mul(&oracle::dense(base.a_tilde()), &oracle::dense(&delta));
    let target = 0.2 / oracle::spectral_norm(&atd);
    let mut pass = true;
    for p in 1..=3 {
        let mut errs = Vec::new();
        for s in scales {
            let mut w = SkewOrthogonal::new(base.a().clone(), base.d().clone(), p, 0)?;
            w.neumann_step(&delta.scale(s * target))?;
            errs.push(oracle::inverse_defect(&oracle::dense(w.a_tilde()), &oracle::dense(w.a())));
        }
        let slope = oracle::log_log_slope(&scales, &errs);
        pass &= (slope - (p as f64 + 1.0)).abs() <= 0.3;
        slopes.push(format!("p={p}: {slope:.3}"));
    }
    verdict(pass, format!("slopes {} (‖ÃδA‖₂ = 0.2 at scale 1)", slopes.join(", ")))
}

fn c5_drift() -> Result<Verdict> {
    let n = 64;
    let task = TaskSpec::Adding { t: 30 };
    let spec = NetworkSpec {
        variant: Variant::NcGru,
        input: task.input_dim(),
        hidden: n,
        output: task.output_dim(),
        ortho: vec![Gate::Reset, Gate::Candidate],
        num_neg: n / 2,
        neumann_order: 2,
        reset_every: 50,
    };
    let mut net = Network::init(&spec, 5)?;
    let mut trainer = Trainer::new(&net, OptimizerConfig::adam(1e-3), 1e-3, InverseMode::Neumann)?;
    let ceiling = 1e-10 * n as f64;
    let (mut worst, mut worst_step, mut worst_after_reset, mut resets, mut over) = (0.0f64, 0, 0.0f64, 0, 0);
    let mut worst_contraction = 0.0f64;
    for k in 0..1000u64 {
        let batch = task.generate(8, 5_000 + k)?;
        let rep = trainer.step(&mut net, &batch)?;
        let drift = net
            .ortho
            .iter()
            .map(|w| oracle::orthogonality_defect(&oracle::dense(w.param.u())))
            .fold(0.0, f64::max);
        worst_contraction = worst_contraction.max(rep.contraction_norm.unwrap_or(0.0));
        if rep.reset {
            resets += 1;
            worst_after_reset = worst_after_reset.max(drift);
        }
        if drift >= 1e-6 {
            over += 1;
        }
        if drift > worst {
            worst = drift;
            worst_step = k + 1;
        }
    }
    verdict(
        worst_after_reset < ceiling && worst < 1e-6,
        format!(
            "post-reset drift max {worst_after_reset:.2e} over {resets} resets (ceiling {ceiling:.1e}); \
             drift max {worst:.2e} at step {worst_step}, {over}/1000 steps ≥ 1e-6; max ‖ÃδA‖₂ {worst_contraction:.3e}"
        ),
    )
}

/// Reachable GRU states: runs of 20 steps from `h_0 = 0` on random inputs.
fn reachable_gru_states(count: usize, seed: u64) -> Vec<(CellParams, StepCache)> {
    let (n, m) = (32, 8);
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let scale = r.gen_range(0.5..3.0);
        let p = random_cell(Variant::Gru, n, m, scale, &mut r);
        let mut h = vec![0.0; n];
        for _ in 0..20 {
            let x: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
            let (next, cache) = forward(&p, &x, &h).expect("shapes match");
            h = next.to_vec();
            out.push((p.clone(), cache));
            if out.len() == count {
                break;
            }
        }
    }
    out
}

fn max_signed(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn c6_theorem_bound() -> Result<Verdict> {
    let states = reachable_gru_states(1000, 600);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    let mut lib_disagree = 0.0f64;
    let mut norms_cache: Option<(usize, [f64; 3])> = None;
    for (idx, (p, cache)) in states.iter().enumerate() {
        let key = idx / 20;
        let [nr, nu, nc] = match norms_cache {
            Some((k, v)) if k == key => v,
            _ => {
                let v = [p.u_r.clone(), p.u_u.clone(), p.u_c.clone()].map(|m| oracle::spectral_norm(&oracle::dense(&m)));
                norms_cache = Some((key, v));
                v
            }
        };
        let s = oracle::cell_step(p, &cache.x, &cache.h_prev);
        let delta_u = s.u.iter().map(|u| u * (1.0 - u)).fold(0.0, f64::max);
        let delta_r = s.r.iter().map(|r| r * (1.0 - r)).fold(0.0, f64::max);
        let max_h = max_signed(&cache.h_prev);
        let max_c = max_signed(&s.c);
        let alpha = delta_u * (max_h + max_c) * nu + max_signed(&s.u.iter().map(|u| 1.0 - u).collect::<Vec<_>>());
        let beta = max_signed(&s.u) * (delta_r * nr * max_h + max_signed(&s.r));
        let bound = alpha + beta * nc;
        let measured = oracle::spectral_norm(&oracle::dense(&jacobian_h(p, cache)?.matrix));
        let slack = bound + 1e-10 - measured;
        min_slack = min_slack.min(bound - measured);
        if slack < 0.0 {
            violations += 1;
        }
        let lib = compute_bound(cache, p)?;
        lib_disagree = lib_disagree.max((lib.bound - bound).abs()).max((lib.measured - measured).abs());
    }

    let step = 1e-6;
    let mut worst_entry = 0.0f64;
    for (p, cache) in states.iter().step_by(20).take(50) {
        let jac = jacobian_h(p, cache)?.matrix;
        let n = p.hidden();
        for j in 0..n {
            let mut plus = cache.h_prev.to_vec();
            let mut minus = cache.h_prev.to_vec();
            plus[j] += step;
            minus[j] -= step;
            let hp = oracle::cell_step(p, &cache.x, &plus).h;
            let hm = oracle::cell_step(p, &cache.x, &minus).h;
            for i in 0..n {
                worst_entry = worst_entry.max(((hp[i] - hm[i]) / (2.0 * step) - jac[(i, j)]).abs());
            }
        }
    }
    verdict(
        violations == 0 && worst_entry < 1e-6 && lib_disagree < 1e-8,
        format!(
            "{violations} violations in 1000 states, min slack {min_slack:.3e}; \
             Jacobian FD max entry err {worst_entry:.2e} on 50 states; library vs oracle {lib_disagree:.1e}"
        ),
    )
}

fn c7_corollaries() -> Result<Verdict> {
    let mut notes = Vec::new();
    let mut pass = true;

    let states = reachable_gru_states(1000, 700);
    let (mut max_du, mut max_dr, mut alpha_excess, mut beta_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (p, cache) in &states {
        let b = compute_bound(cache, p)?;
        max_du = max_du.max(b.delta_u);
        max_dr = max_dr.max(b.delta_r);
        alpha_excess = alpha_excess.max(b.alpha - (0.5 * b.u_u_norm + 1.0));
        beta_excess = beta_excess.max(b.beta - (0.25 * b.u_r_norm + 1.0));
    }
    pass &= max_du <= 0.25 && max_dr <= 0.25 && alpha_excess <= 1e-12 && beta_excess <= 1e-12;
    notes.push(format!(
        "δ_u {max_du:.4} δ_r {max_dr:.4}; α−(½‖U_u‖+1) ≤ {alpha_excess:.3}, β−(¼‖U_r‖+1) ≤ {beta_excess:.3}"
    ));

    let mut r = rng(701);
    let gru = random_cell(Variant::Gru, 32, 8, 1.0, &mut r);
    let mut sweeps = Vec::new();
    for regime in SaturationRegime::ALL {
        let s = saturation_sweep(&gru, regime, 200, 702)?;
        let limit = if regime.is_whole_vector() { 1.05 } else { 2.05 };
        pass &= s.max_alpha_plus_beta <= limit && s.max_saturation <= SATURATION_TOL;
        sweeps.push(format!("{regime:?} {:.4}", s.max_alpha_plus_beta));
    }
    notes.push(format!("max α+β: {}", sweeps.join(", ")));

    let mut nc = random_cell(Variant::NcGru, 32, 8, 1.0, &mut r);
    nc.u_r = orthogonal(32, &mut r)?;
    nc.u_c = orthogonal(32, &mut r)?;
    let forced = force_gates(&nc, SaturationRegime::Mixed, forcing_magnitude(&nc));
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..=1.0)).collect();
        let h: Vec<f64> = (0..32).map(|_| r.gen_range(-1.0..=1.0)).collect();
        let (_, cache) = forward(&forced, &x, &h)?;
        let sat = cache.u.iter().chain(cache.r.iter()).map(|&g| g.min(1.0 - g)).fold(0.0, f64::max);
        ensure!(sat <= SATURATION_TOL, "NC-GRU gates not saturated ({sat:e})");
        worst = worst.max(oracle::spectral_norm(&oracle::dense(&jacobian_h(&forced, &cache)?.matrix)));
    }
    pass &= worst <= 2.05;
    notes.push(format!("saturated NC-GRU max ‖∂h_t/∂h_(t−1)‖₂ {worst:.4}"));
    verdict(pass, notes.join("; "))
}

/// Cross-entropy of the memoryless strategy, evaluated on generated batches:
/// certain `0` until the marker is read, then uniform over digits 1..=8.
fn memoryless_on_generator(t: usize, samples: usize, seed: u64) -> Result<f64> {
    let (mut total, mut steps) = (0.0, 0usize);
    let chunk = 250;
    for c in 0..samples.div_ceil(chunk) {
        let count = chunk.min(samples - c * chunk);
        let batch = gen_copying(t, count, seed.wrapping_add(c as u64))?;
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            let SequenceTarget::Classes(cs) = y else { anyhow::bail!("copying targets are per step") };
            let mut seen = false;
            for (step, &class) in cs.iter().enumerate() {
                seen |= x[(step, COPY_MARKER)] == 1.0;
                let prob: f64 = if seen {
                    if (1..=8).contains(&class) { 1.0 / 8.0 } else { 0.0 }
                } else if class == 0 {
                    1.0
                } else {
                    0.0
                };
                total -= prob.ln();
            }
            steps += cs.len();
        }
    }
    Ok(total / steps as f64)
}

fn c8_copying_baseline() -> Result<Verdict> {
    let mut pass = true;
    let mut notes = Vec::new();
    for t in [100, 1000] {
        let closed = 10.0 * 8f64.ln() / (t as f64 + 20.0);
        let empirical = memoryless_on_generator(t, 10_000, 800)?;
        let library = copying_memoryless_loss(t, 10_000, 801);
        let rel = (empirical - closed).abs() / closed;
        pass &= rel < 0.01 && (library - closed).abs() / closed < 0.01 && (copying_baseline(t) - closed).abs() < 1e-15;
        notes.push(format!("T={t}: empirical {empirical:.6} vs {closed:.6} (rel {rel:.1e})"));
    }
    let table = 10.0 * 8f64.ln() / 1020.0;
    pass &= (table - 0.02039).abs() < 5e-6;
    notes.push(format!("10·ln8/1020 = {table:.5}"));
    verdict(pass, notes.join("; "))
}

struct DeskRun {
    output: RunOutput,
    csv: Vec<u8>,
}

fn desk_run(preset: &str, dir: &Path) -> Result<DeskRun> {
    let cfg = ExperimentConfig::preset(preset)?;
    let output = run_training(&cfg, dir)?;
    let csv = fs::read(dir.join(METRICS_FILE))?;
    Ok(DeskRun { output, csv })
}

fn c9_adding(run: &DeskRun) -> Result<Verdict> {
    let eval = run.output.final_eval().unwrap_or(f64::NAN);
    verdict(
        eval < 0.05,
        format!("final eval MSE {eval:.3e} after {} iterations (constant predictor 1/6)", run.output.rows.len()),
    )
}

fn c10_parenthesis(root: &Path) -> Result<Verdict> {
    let nc_cfg = ExperimentConfig::preset("parenthesis")?;
    let gru_cfg = ExperimentConfig::preset("parenthesis-gru")?;
    let (p_nc, p_gru) = (nc_cfg.network_spec().param_count(), gru_cfg.network_spec().param_count());
    let nc = run_training(&nc_cfg, &root.join("parenthesis"))?.final_eval().unwrap_or(f64::NAN);
    let gru = run_training(&gru_cfg, &root.join("parenthesis-gru"))?.final_eval().unwrap_or(f64::NAN);
    verdict(
        nc <= gru && p_nc == p_gru,
        format!("NC-GRU(49) {nc:.4} vs GRU(42) {gru:.4}; parameters {p_nc} vs {p_gru}"),
    )
}

fn c11_norm_monitor(csv: &[u8]) -> Result<Verdict> {
    let text = std::str::from_utf8(csv)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = header.iter().position(|h| *h == "contraction_norm");
    let Some(col) = col else { return verdict(false, "no contraction_norm column") };
    let (mut rows, mut missing, mut max) = (0, 0, 0.0f64);
    for line in lines {
        rows += 1;
        match line.split(',').nth(col).filter(|v| !v.is_empty()) {
            Some(v) => max = max.max(v.parse::<f64>()?),
            None => missing += 1,
        }
    }
    verdict(
        rows > 0 && missing == 0 && max < 1.0,
        format!("{rows} rows, {missing} without a value, max contraction norm {max:.3e}"),
    )
}

fn c12_optimizer_skew() -> Result<Verdict> {
    let n = 12;
    let mut worst = 0.0f64;
    let mut r = rng(1200);
    for cfg in [OptimizerConfig::sgd(1e-2), OptimizerConfig::rmsprop(1e-3), OptimizerConfig::adam(1e-3)] {
        let mut state = OptimizerState::new(cfg, n * n);
        for _ in 0..100 {
            let g = random_skew(n, r.gen_range(1e-3..10.0), &mut r);
            let delta = state.step(g.as_slice())?;
            worst = worst.max(oracle::skew_defect(&delta, n));
        }
    }
    verdict(worst < 1e-13, format!("max ‖δA+δAᵀ‖_max {worst:.1e} over 3 optimizers × 100 steps"))
}

fn c13_determinism(first: &DeskRun, dir: &Path) -> Result<Verdict> {
    let second = desk_run("adding", dir)?;
    let same = first.csv == second.csv;
    verdict(
        same,
        format!("adding preset run twice: {} vs {} bytes, identical = {same}", first.csv.len(), second.csv.len()),
    )
}

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
}

fn report(outcomes: &mut Vec<Outcome>, id: usize, name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Result<Verdict>) {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let within = budget.is_none_or(|b| elapsed < b);
    let (pass, detail) = match result {
        Ok(v) => (v.pass && within, v.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    let timing = match budget {
        Some(b) => format!("{:.1}s of {}s", elapsed.as_secs_f64(), b.as_secs()),
        None => format!("{:.1}s", elapsed.as_secs_f64()),
    };
    println!("{} {id:>2} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
    outcomes.push(Outcome { id, name, pass });
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let root = tempfile::tempdir().expect("temporary directory");
    let mut out = Vec::new();
    report(&mut out, 1, "cayley orthogonality", secs(5), c1_cayley_orthogonality);
    report(&mut out, 2, "pullback gradient", secs(10), c2_pullback);
    report(&mut out, 3, "bptt gradients", secs(30), c3_bptt);
    report(&mut out, 4, "neumann order law", secs(5), c4_neumann_order);
    report(&mut out, 5, "drift control", secs(60), c5_drift);
    report(&mut out, 6, "jacobian bound", secs(60), c6_theorem_bound);
    report(&mut out, 7, "saturation bounds", secs(60), c7_corollaries);
    report(&mut out, 8, "copying baseline", secs(30), c8_copying_baseline);

    let start = Instant::now();
    let adding = desk_run("adding", &root.path().join("adding"));
    let adding_time = start.elapsed();
    match &adding {
        Ok(run) => report(&mut out, 9, "adding desk run", secs(900), || {
            let v = c9_adding(run)?;
            ensure!(adding_time < Duration::from_secs(900), "run took {:.0}s", adding_time.as_secs_f64());
            Ok(Verdict { detail: format!("{} in {:.0}s", v.detail, adding_time.as_secs_f64()), ..v })
        }),
        Err(e) => report(&mut out, 9, "adding desk run", None, || anyhow::bail!("{e:#}")),
    }
    report(&mut out, 10, "parenthesis desk runs", secs(1200), || c10_parenthesis(root.path()));
    match &adding {
        Ok(run) => {
            report(&mut out, 11, "contraction monitor", None, || c11_norm_monitor(&run.csv));
            report(&mut out, 12, "optimizer skew preservation", secs(5), c12_optimizer_skew);
            report(&mut out, 13, "determinism", None, || c13_determinism(run, &root.path().join("adding-repeat")));
        }
        Err(_) => {
            report(&mut out, 11, "contraction monitor", None, || anyhow::bail!("no adding run"));
            report(&mut out, 12, "optimizer skew preservation", secs(5), c12_optimizer_skew);
            report(&mut out, 13, "determinism", None, || anyhow::bail!("no adding run"));
        }
    }

    let failed: Vec<String> = out.iter().filter(|o| !o.pass).map(|o| format!("{} ({})", o.id, o.name)).collect();
    println!("acceptance: {} of {} criteria passed", out.len() - failed.len(), out.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
