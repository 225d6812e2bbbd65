use std::process::ExitCode;

use clap::{Parser, Subcommand};
use setsel_cli::commands::{self, BenchArgs, GenArgs, ReportArgs, SelectArgs, TrainArgs};
use setsel_cli::config::{Global, Precision};
use setsel_cli::{CliError, Result};

/// Subset selection for max-pooled set classifiers: generate data, train,
/// attack and benchmark.
#[derive(Debug, Parser)]
#[command(name = "setsel", version)]
struct Cli {
    /// Seed for data generation, initialisation, shuffling and random scores.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Arithmetic precision of the model: f32 or f64.
    #[arg(long, global = true, default_value = "f64")]
    precision: String,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic shape dataset.
    Gen(GenArgs),
    /// Train the set classifier on a dataset.
    Train(TrainArgs),
    /// Attack every sample of a split with one strategy.
    Select(SelectArgs),
    /// Time and score several strategies on a few samples.
    Bench(BenchArgs),
    /// Convert result CSVs to one long table.
    Report(ReportArgs),
}

fn run(cli: Cli) -> Result<()> {
    let global = Global {
        seed: cli.seed,
        precision: cli.precision.parse::<Precision>()?,
        threads: cli.threads,
    };
    if let Some(t) = global.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Gen(a) => {
            let manifest = commands::gen(&global, a)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train(a) => {
            let o = commands::run_train(&global, a)?;
            println!("wrote {} and {}", o.checkpoint.display(), o.metrics.display());
            if let Some(acc) = o.final_test_accuracy {
                println!("final test accuracy {acc:.4}");
            }
        }
        Command::Select(a) => {
            let o = commands::run_select(&global, a)?;
            println!("{} on {} samples", o.strategy, o.samples);
            for (r, acc) in &o.accuracy {
                println!("  removed {r:>4}  accuracy {acc:.4}");
            }
            println!(
                "  mean loss {:.4}  {:.1} ms/sample  {:.0} forwards  {:.0} backwards",
                o.mean_final_loss, o.ms_per_sample, o.forwards_per_sample, o.backwards_per_sample
            );
        }
        Command::Bench(a) => {
            for r in commands::run_bench(&global, a)? {
                println!(
                    "{:<24} {:<8} acc {:.4}  {:>10.2} ms/sample  {:>8.0} fwd  {:>4.0} bwd",
                    r.strategy, r.mode, r.accuracy, r.ms_per_sample, r.forwards_per_sample, r.backwards_per_sample
                );
            }
        }
        Command::Report(a) => {
            let n = commands::run_report(&global, a)?;
            println!("wrote {n} rows to {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
