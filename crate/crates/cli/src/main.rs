//! `periodavg` command-line harness.
//!
//! Exit status: 0 on success, 1 if any run failed or an I/O error occurred,
//! 2 on an invalid config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use periodavg::harness::{format_summary, parse_config, run_experiment, summarize_dir, validate_config, RunOptions};
use periodavg::Error;

#[derive(Parser)]
#[command(name = "periodavg", version, about = "Simulated data-parallel SGD with periodic parameter averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy and seed of an experiment config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long, env = "PERIODAVG_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        parallel_runs: usize,
        /// Threads computing worker gradients inside each run.
        #[arg(long, default_value_t = 1)]
        worker_threads: usize,
    },
    /// Check a config and its dataset without running anything.
    Validate { config: PathBuf },
    /// Print the summary table for a directory of run CSVs.
    Summarize { dir: PathBuf },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_config() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            output_dir,
            parallel_runs,
            worker_threads,
        } => {
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let opts = RunOptions {
                output_dir,
                parallel_runs: parallel_runs.max(1),
                worker_threads: worker_threads.max(1),
            };
            let outcome = match run_experiment(&cfg, &opts) {
                Ok(o) => o,
                Err(e) => return fail(&e),
            };
            print!("{}", format_summary(&outcome.summary));
            println!("output: {}", outcome.output_dir.display());
            let mut failed = false;
            for r in outcome.failures() {
                failed = true;
                if let Err(e) = &r.result {
                    eprintln!("run {} seed {} failed: {e}", r.strategy, r.seed);
                }
            }
            if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Validate { config } => match parse_config(&config).and_then(|c| validate_config(&c)) {
            Ok(runs) => {
                println!("ok: {runs} runs");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Summarize { dir } => match summarize_dir(&dir) {
            Ok(rows) => {
                print!("{}", format_summary(&rows));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
