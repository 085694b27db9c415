//! Command line laboratory for diagonal functional statistics of sparse
//! random matrices.
//!
//! Exit codes: 0 success, 1 check/acceptance failure, 2 configuration
//! error, 3 numeric non-convergence.

mod commands;
mod config;
mod output;
mod selfcheck;

use clap::{Parser, Subcommand};
use config::{Config, Format};
use output::Emitter;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rmtlab", version, about = "sparse random-matrix statistics laboratory")]
struct Cli {
    /// Output directory (default: $RMTLAB_OUT or ./rmtlab-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the master seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bound the number of parallel replica workers (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output format for tabular/object payloads
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the analytic identity suites and exit nonzero on any failure
    Selfcheck {
        /// Inject a deliberate fault (supported: m-branch)
        #[arg(long)]
        sabotage: Option<String>,
    },
    /// Theory variance split plus the kernel-integral cross-check
    Variance {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo CLT run: samples, moments, normality tests
    Clt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Scale sweep of the variance terms with the crossing estimate
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Resolvent law diagnostics over a spectral-domain grid
    Laws {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump one sampled matrix as text
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("RMTLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rmtlab-out"))
}

fn exit_code_for(err: &rmtlab_core::Error) -> u8 {
    use rmtlab_core::Error::*;
    match err {
        QuadratureNonConvergence { .. } | KernelImaginaryResidual { .. }
        | EigensolverFailure { .. } => 3,
        InvalidParameter(_) | SupportCondition(_) | InvalidInput(_)
        | SparsityWindow { .. } => 2,
        ZeroVariance | NegativeVariance { .. } => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = out_dir(&cli.out);
    let format = cli.format.unwrap_or_default();

    match &cli.cmd {
        Cmd::Selfcheck { sabotage } => {
            let report = selfcheck::run(sabotage.as_deref());
            for s in &report.suites {
                let mark = if s.passed { "pass" } else { "FAIL" };
                println!("[{mark}] {}", s.name);
                if !s.passed {
                    for c in s.checks.iter().filter(|c| !c.passed) {
                        println!(
                            "       {}: {:.3e} (threshold {:.3e})",
                            c.name, c.value, c.threshold
                        );
                    }
                }
            }
            let mut emitter = match Emitter::new(&dir) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("cannot create output directory: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = emitter.write_json("selfcheck.json", &report) {
                eprintln!("cannot write report: {e}");
                return ExitCode::from(2);
            }
            let _ = emitter.write_manifest("selfcheck", 0, toml::Value::String(String::new()));
            if report.all_passed {
                println!("selfcheck: all {} suites passed", report.suites.len());
                ExitCode::SUCCESS
            } else {
                let failing: Vec<&str> = report
                    .suites
                    .iter()
                    .filter(|s| !s.passed)
                    .map(|s| s.name.as_str())
                    .collect();
                eprintln!("selfcheck FAILED: {}", failing.join(", "));
                ExitCode::from(1)
            }
        }
        Cmd::Variance { config }
        | Cmd::Clt { config }
        | Cmd::Sweep { config }
        | Cmd::Laws { config }
        | Cmd::Sample { config, .. } => {
            let cfg = match Config::load(config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let mut emitter = match Emitter::new(&dir) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("cannot create output directory {}: {e}", dir.display());
                    return ExitCode::from(2);
                }
            };
            let seed = commands::effective_seed(&cfg, cli.seed);
            let (name, result) = match &cli.cmd {
                Cmd::Variance { .. } => (
                    "variance",
                    commands::cmd_variance(cfg.clone(), &mut emitter, cli.seed, cli.workers),
                ),
                Cmd::Clt { .. } => (
                    "clt",
                    commands::cmd_clt(cfg.clone(), &mut emitter, cli.seed, cli.workers, format),
                ),
                Cmd::Sweep { .. } => (
                    "sweep",
                    commands::cmd_sweep(cfg.clone(), &mut emitter, cli.seed, cli.workers, format),
                ),
                Cmd::Laws { .. } => (
                    "laws",
                    commands::cmd_laws(cfg.clone(), &mut emitter, cli.seed, cli.workers),
                ),
                Cmd::Sample { replica, .. } => (
                    "sample",
                    commands::cmd_sample(cfg.clone(), &mut emitter, cli.seed, *replica),
                ),
                Cmd::Selfcheck { .. } => unreachable!(),
            };
            match result {
                Ok(()) => {
                    let snapshot = toml::Value::try_from(&cfg)
                        .unwrap_or(toml::Value::String("unserializable".into()));
                    if let Err(e) = emitter.write_manifest(name, seed, snapshot) {
                        eprintln!("cannot write manifest: {e}");
                        return ExitCode::from(2);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{name}: {e}");
                    ExitCode::from(exit_code_for(&e))
                }
            }
        }
    }
}
