use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use hardbatch_cli::commands::{
    cmd_bench, cmd_eval, cmd_gen, cmd_sample, cmd_train, BenchArgs, EvalArgs, GenArgs, SampleArgs,
    TrainArgs,
};

/// Hard-sample mini-batch mining: generate data, plan epochs, compare
/// samplers, train a toy metric and evaluate retrieval.
#[derive(Parser)]
#[command(name = "hardbatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic twin-identity feature set.
    Gen(GenArgs),
    /// Write one epoch plan per epoch.
    Sample(SampleArgs),
    /// Compare PK, GS and DFGS batch hardness, optionally sweeping (m, k).
    Bench(BenchArgs),
    /// Train a linear metric with batch-hard triplet loss.
    Train(TrainArgs),
    /// Compute mAP and CMC for a query/gallery pair.
    Eval(EvalArgs),
}

const THREADS_VAR: &str = "HARDBATCH_THREADS";

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a non-negative integer, got {raw:?}"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
