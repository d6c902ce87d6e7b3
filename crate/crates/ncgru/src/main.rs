use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ncgru::config::ExperimentConfig;
use ncgru::core::gradcheck::{run_gradcheck, Scope, Sizes};
use ncgru::core::tasks::{TaskKind, TaskSpec};
use ncgru::harness::{output_dir, run_ablation, run_training, AblationMode, Diverged};

#[derive(Parser, Debug)]
#[command(name = "ncgru", version, about = "Train and check orthogonal GRU models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write metrics.csv and checkpoint.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output.directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every arm of an ablation with a shared seed.
    Ablate {
        /// neumann-vs-inverse, ortho-placement or norm-monitor.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// cell, cayley or bptt.
        #[arg(long)]
        scope: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Dump generated samples as JSON lines.
    Gen {
        /// adding, copying, parenthesis or denoise.
        #[arg(long)]
        task: String,
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        n_pairs: usize,
        #[arg(long, default_value_t = 10)]
        alphabet_n: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Diverged>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let dir = output_dir(&cfg, out);
            let run = run_training(&cfg, &dir)?;
            println!(
                "{} steps, final eval {}, max drift {}, max contraction {} -> {}",
                run.rows.len(),
                fmt_opt(run.final_eval()),
                fmt_opt(run.max_drift()),
                fmt_opt(run.max_contraction()),
                dir.display()
            );
            Ok(true)
        }
        Command::Ablate { mode, config, out } => {
            let mode = AblationMode::parse(&mode)?;
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(&cfg, out);
            let arms = run_ablation(mode, &cfg, Some(&dir))?;
            println!("arm\tsteps\tfinal_eval\tmin_eval\tmax_drift\tmax_contraction");
            for (arm, run) in &arms {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    arm.label,
                    run.rows.len(),
                    fmt_opt(run.final_eval()),
                    fmt_opt(run.min_eval()),
                    fmt_opt(run.max_drift()),
                    fmt_opt(run.max_contraction())
                );
            }
            if mode == AblationMode::NormMonitor {
                let ok = arms.iter().all(|(_, r)| r.max_contraction().is_some_and(|c| c < 1.0));
                println!("contraction norm below 1 at every update: {ok}");
                return Ok(ok);
            }
            Ok(true)
        }
        Command::Gradcheck { scope, seed, instances } => {
            let scope = Scope::parse(&scope)?;
            let mut sizes = Sizes::default_for(scope);
            if let Some(n) = instances {
                sizes.instances = n;
            }
            let report = run_gradcheck(scope, sizes, seed)?;
            for c in &report.checks {
                println!("{:<16} {:.3e}", c.name, c.rel_err);
            }
            if let Some(z) = report.zero_upstream_max {
                println!("{:<16} {:e}", "zero upstream", z);
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            println!(
                "{verdict} {}: max rel err {:.3e} (tolerance {:e})",
                scope.name(),
                report.max_rel_err(),
                report.tolerance
            );
            Ok(report.passed())
        }
        Command::Gen { task, t, count, out, seed, n_pairs, alphabet_n } => {
            let spec = match TaskKind::parse(&task)? {
                TaskKind::Adding => TaskSpec::Adding { t },
                TaskKind::Copying => TaskSpec::Copying { t },
                TaskKind::Parenthesis => TaskSpec::Parenthesis { t, n_pairs, final_only: false },
                TaskKind::Denoise => TaskSpec::Denoise { t, alphabet_n },
            };
            ncgru::gen::write_jsonl_file(&spec, count, seed, &out)
                .with_context(|| format!("generating {task}"))?;
            println!("wrote {count} {task} samples to {}", out.display());
            Ok(true)
        }
    }
}
