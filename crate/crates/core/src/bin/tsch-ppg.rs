use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tsch_core::harness::{run_convergence, run_evaluate, run_scaling, selftest, ExperimentConfig};
use tsch_core::Error;

#[derive(Parser)]
#[command(name = "tsch-ppg", version, about = "TSCH cell and power allocation experiments")]
struct Cli {
    /// Experiment configuration (TOML); the reference setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Added to every seed of the sweep.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train each learner per seed and write reward curves.
    Convergence,
    /// Train and evaluate every algorithm across the node-count sweep.
    Scaling,
    /// Evaluate stored checkpoints greedily next to the heuristics.
    Evaluate {
        /// Checkpoint files; defaults to every checkpoint under `<out>/checkpoints`.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Run the identity, gradient, advantage and simulator suites.
    Selftest,
}

fn run(cli: Cli) -> Result<bool, Error> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match cli.command {
        Command::Convergence => {
            let runs = run_convergence(&cfg, &out, cli.seed_offset)?;
            for r in &runs {
                let final_reward = r.report.final_reward(0.1).unwrap_or(f64::NAN);
                println!("{} seed {}: final reward {final_reward:.4}", r.algorithm.name(), r.seed);
            }
        }
        Command::Scaling => {
            for r in run_scaling(&cfg, &out, cli.seed_offset)? {
                println!(
                    "{} n={} seed {}: throughput {:.4}",
                    r.algorithm.name(),
                    r.n_nodes,
                    r.seed,
                    r.stats.throughput.mean
                );
            }
        }
        Command::Evaluate { checkpoints } => {
            for r in run_evaluate(&cfg, &out, &checkpoints, cli.seed_offset)? {
                println!(
                    "{}: throughput {:.4} utility {:.4} violations {:.2}",
                    r.source, r.stats.throughput.mean, r.stats.utility.mean, r.stats.violations.mean
                );
            }
        }
        Command::Selftest => {
            let checks = selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
