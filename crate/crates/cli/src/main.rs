//! `govern`: reproducible multi-teacher distillation experiments from
//! the command line. Every stochastic command takes an explicit seed and
//! writes a manifest it can be re-run from; results never depend on the
//! worker count.

mod config;
mod run;

use clap::{Parser, Subcommand};

use config::{usage, AppError};

#[derive(Parser)]
#[command(name = "govern", version, about = "Multi-teacher ensemble distillation toolkit")]
struct Cli {
    /// Worker thread cap (default: GOVERN_THREADS, else all cores).
    /// Results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset scored by noisy teachers
    Synthesize(run::SynthesizeArgs),
    /// Write per-record ensemble targets for a combiner strategy
    Ensemble(run::EnsembleArgs),
    /// Fit logistic-regression combination weights on labeled data
    LrFit(run::LrFitArgs),
    /// Train a student model against ensemble targets
    Distill(run::DistillArgs),
    /// Train a student model against ground-truth labels
    Train(run::TrainArgs),
    /// Score a labeled dataset with a model and report PR metrics
    Evaluate(run::EvaluateArgs),
    /// Voting-math and scorer-distribution simulations
    Simulate(run::SimulateArgs),
    /// Delta from Good/Same/Bad comparison counts
    Gsb(run::GsbArgs),
}

fn init_threads(flag: Option<usize>) -> Result<(), AppError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("GOVERN_THREADS") {
            Ok(raw) => Some(raw.parse().map_err(|_| {
                usage(format!("GOVERN_THREADS must be a positive integer, got {raw:?}"))
            })?),
            Err(std::env::VarError::NotPresent) => None,
            Err(std::env::VarError::NotUnicode(_)) => {
                return Err(usage("GOVERN_THREADS must be a positive integer"))
            }
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Runtime(anyhow::anyhow!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = init_threads(cli.threads).and_then(|()| match cli.command {
        Command::Synthesize(args) => run::synthesize(args),
        Command::Ensemble(args) => run::ensemble(args),
        Command::LrFit(args) => run::lr_fit_cmd(args),
        Command::Distill(args) => run::distill_cmd(args),
        Command::Train(args) => run::train_cmd(args),
        Command::Evaluate(args) => run::evaluate(args),
        Command::Simulate(args) => run::simulate(args),
        Command::Gsb(args) => run::gsb(args),
    });
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
