//! `givbma` command-line interface.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 data error,
//! 4 numerical abort.

mod bench;
mod error;
mod fit;
mod manifest;
mod nzprior;
mod predict;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "givbma", version, about = "Bayesian model averaging for instrumental variables")]
struct Cli {
    /// Worker threads for replication-level parallelism.
    #[arg(long, global = true, env = "GIVBMA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to CSV data.
    Fit(fit::FitArgs),
    /// Run a simulation experiment.
    Bench(bench::BenchArgs),
    /// Score holdout rows under a fitted chain.
    Predict(predict::PredictArgs),
    /// Print the prior on the number of valid and relevant instruments.
    Nzprior(nzprior::NzArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(error::CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(error::OTHER);
        }
    }
    let res = match &cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Nzprior(a) => nzprior::run(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
