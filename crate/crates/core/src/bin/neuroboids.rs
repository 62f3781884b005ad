//! Command-line front end: run, resume, bench, analyze.
//!
//! Exit codes: 0 success, 2 run ended in extinction, 64 usage or config
//! error, 65 data integrity error, 70 simulation fault, 74 I/O error.

use clap::{Args, Parser, Subcommand};
use neuroboids::bench::{run_sweep, scaling_exponent, write_csv, BenchParams};
use neuroboids::config::RunConfig;
use neuroboids::runner::{self, Analytic, RunError, RunStatus};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_EXTINCT: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_INTEGRITY: u8 = 65;
const EXIT_FAULT: u8 = 70;
const EXIT_IO: u8 = 74;

/// Output directory override honored when `--out` is absent.
const OUT_ENV: &str = "NEUROBOIDS_OUT";

#[derive(Parser)]
#[command(name = "neuroboids", version, about = "Concurrent evolutionary neural boids simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured simulation run.
    Run(RunArgs),
    /// Continue a run from a snapshot; logs cover only the resumed steps.
    Resume(ResumeArgs),
    /// Sweep the signal-propagation backends over population sizes.
    Bench(BenchArgs),
    /// Produce analysis artifacts for a finished run directory.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $NEUROBOIDS_OUT or runs/<task>-seed<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 = all cores. Affects wall time only.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ResumeArgs {
    /// Snapshot file to resume from.
    #[arg(long)]
    snapshot: PathBuf,
    /// The original run config; must hash to the value in the snapshot.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run up to this step instead of the configured total.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Output CSV path.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    /// Comma-separated emitter counts (default 2^11..2^17).
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 0.002)]
    density: f64,
    #[arg(long, default_value_t = 25.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// A finished run directory (containing resolved.cfg and the logs).
    #[arg(long)]
    run_dir: PathBuf,
    /// all | neighbors | pca | phylogeny | assortment
    #[arg(long, default_value = "all")]
    which: String,
}

fn error_code(err: &RunError) -> u8 {
    match err {
        RunError::Config(_) => EXIT_USAGE,
        RunError::Integrity(_) | RunError::Analysis(_) => EXIT_INTEGRITY,
        RunError::Fault(_) => EXIT_FAULT,
        RunError::Io { .. } => EXIT_IO,
    }
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(error_code(&err))
}

fn default_out_dir(config: &RunConfig) -> PathBuf {
    if let Ok(dir) = std::env::var(OUT_ENV) {
        return PathBuf::from(dir);
    }
    PathBuf::from("runs").join(format!("{}-seed{}", config.run.task.as_str(), config.run.seed))
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e.into()),
    };
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| default_out_dir(&config));
    match runner::run_to_completion(&config, &out, args.threads) {
        Ok(outcome) => {
            println!(
                "{}: {} steps, population {}, mean efficiency {:.6}, {:.2}s -> {}",
                match outcome.status {
                    RunStatus::Completed => "completed",
                    RunStatus::Extinct => "extinct",
                },
                outcome.final_step,
                outcome.population,
                outcome.mean_efficiency,
                outcome.wall_seconds,
                outcome.out_dir.display()
            );
            match outcome.status {
                RunStatus::Completed => ExitCode::SUCCESS,
                RunStatus::Extinct => ExitCode::from(EXIT_EXTINCT),
            }
        }
        Err(e) => fail(e),
    }
}

fn cmd_resume(args: ResumeArgs) -> ExitCode {
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e.into()),
    };
    let out = args.out.unwrap_or_else(|| default_out_dir(&config));
    match runner::resume_run(&config, &args.snapshot, &out, args.threads, args.steps) {
        Ok(outcome) => {
            println!(
                "resumed to step {}, population {}, {:.2}s -> {}",
                outcome.final_step,
                outcome.population,
                outcome.wall_seconds,
                outcome.out_dir.display()
            );
            match outcome.status {
                RunStatus::Completed => ExitCode::SUCCESS,
                RunStatus::Extinct => ExitCode::from(EXIT_EXTINCT),
            }
        }
        Err(e) => fail(e),
    }
}

fn cmd_bench(args: BenchArgs) -> ExitCode {
    let mut params = BenchParams {
        theta: args.theta,
        density: args.density,
        cutoff: args.cutoff,
        reps: args.reps,
        probes: args.probes,
        seed: args.seed,
        ..BenchParams::default()
    };
    if let Some(sizes) = &args.sizes {
        match sizes.split(',').map(|s| s.trim().parse::<usize>()).collect::<Result<Vec<_>, _>>() {
            Ok(v) if !v.is_empty() => params.sizes = v,
            _ => {
                eprintln!("error: --sizes expects a comma-separated list of integers");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }
    let pool = runner::build_pool(args.threads);
    let rows = pool.install(|| run_sweep(&params));
    if let Err(e) = write_csv(&args.out, &rows, args.seed) {
        eprintln!("error: failed to write {}: {e}", args.out.display());
        return ExitCode::from(EXIT_IO);
    }
    for row in &rows {
        println!(
            "N={:<7} {:<8} theta={:<4} {:>10.3} ms/step  p99 err {:.4}",
            row.n, row.mode, row.theta, row.ms_per_step, row.p99_rel_error
        );
    }
    println!(
        "scaling exponents: pairwise {:.3}, tree {:.3} -> {}",
        scaling_exponent(&rows, "pairwise"),
        scaling_exponent(&rows, "tree"),
        args.out.display()
    );
    ExitCode::SUCCESS
}

fn cmd_analyze(args: AnalyzeArgs) -> ExitCode {
    let which = match Analytic::parse(&args.which) {
        Some(w) => w,
        None => {
            eprintln!(
                "error: unknown analytic {:?} (expected all|neighbors|pca|phylogeny|assortment)",
                args.which
            );
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match runner::analyze(&args.run_dir, &which) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path too.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(EXIT_USAGE) };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Resume(args) => cmd_resume(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Analyze(args) => cmd_analyze(args),
    }
}
