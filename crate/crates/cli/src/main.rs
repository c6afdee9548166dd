//! `entroseg`: synthesize benchmarks, train, extract pseudo-labels and evaluate.
//!
//! Every command writes into a content-addressed directory under `--out` and
//! prints that directory as the last line of standard output.

mod commands;
mod fail;
mod maps;
mod run;

use clap::{Parser, Subcommand};

use crate::fail::{CliResult, Failure, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "entroseg", version, about = "Entropy-guided pseudo-labels for domain adaptive segmentation")]
struct Cli {
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic domain-shift dataset.
    Synth(commands::SynthArgs),
    /// Train a classifier on a dataset, optionally with target pseudo-labels.
    Train(commands::TrainArgs),
    /// Compute per-class thresholds from probability maps.
    Thresholds(commands::ThresholdsArgs),
    /// Extract pseudo-labels from probability maps.
    Extract(commands::ExtractArgs),
    /// Score predictions against ground truth.
    Metrics(commands::MetricsArgs),
    /// Compare softmax and entropy pseudo-labels pixel by pixel.
    Diff(commands::DiffArgs),
    /// Run baseline training followed by self-training iterations.
    Selftrain(commands::SelftrainArgs),
    /// Self-train once per entropy hyperparameter from a shared baseline.
    Sweep(commands::SweepArgs),
    /// Render maps or comparison panels as PNG.
    Render(commands::RenderArgs),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Thresholds(a) => commands::thresholds(a),
        Command::Extract(a) => commands::extract(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Diff(a) => commands::diff(a),
        Command::Selftrain(a) => commands::selftrain(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Render(a) => commands::render(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(f) = dispatch(cli) {
        eprintln!("entroseg: {f}");
        std::process::exit(f.code());
    }
}
