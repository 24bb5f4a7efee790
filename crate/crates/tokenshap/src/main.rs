use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tokenshap::config::{Overrides, RunConfig};
use tokenshap::error::{CliError, CliResult};
use tokenshap::stages::{self, BenchRow};
use tokenshap::synthetic;

/// Token attribution pipeline for text classifiers.
#[derive(Debug, Parser)]
#[command(name = "tokenshap", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// exact, owen, partition or permutation.
    #[arg(long, global = true)]
    method: Option<String>,

    /// Threads used by `explain`.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize the corpus and mask gazetteer entities.
    Mask,
    /// Apply reviewed mask proposals.
    Correct,
    /// Attribute every utterance.
    Explain,
    /// Average attributions per word and class.
    Aggregate,
    /// Top words per class with P/N labels.
    Rank,
    /// Shared-word heatmap (SVG and CSV).
    Heatmap,
    /// Occurrences of ranked words in the task document.
    Freq,
    /// Embedding similarity of ranked words to class anchors.
    Simcheck,
    /// Weighted F1 against gold labels.
    Eval,
    /// Model evaluations and wall time per method.
    Bench {
        /// Benchmark this text instead of the corpus.
        #[arg(long)]
        text: Option<String>,
    },
    /// mask, correct, explain, aggregate, rank and heatmap in sequence.
    Pipeline,
    /// Write the planted-keyword fixture into a directory.
    Synth { dir: PathBuf },
}

fn print_bench(rows: &[BenchRow]) {
    println!("{:<12} {:<16} {:>4} {:>12} {:>10}", "method", "id", "n", "model_evals", "wall_ms");
    for r in rows {
        let evals = r.model_evals.map_or_else(|| r.note.clone(), |e| e.to_string());
        let wall = r.wall_ms.map_or_else(String::new, |w| format!("{w:.2}"));
        println!("{:<12} {:<16} {:>4} {:>12} {:>10}", r.method, r.id, r.n, evals, wall);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Synth { dir } = &cli.command {
        return synthetic::write_fixture(dir).map_err(|e| CliError::io("synth", dir, e));
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::validation("--config is required"))?;
    let overrides = Overrides {
        seed: cli.seed,
        method: cli.method,
        workers: cli.workers,
        out_dir: cli.out_dir,
    };
    let config = RunConfig::load(&path, &overrides)?;
    match cli.command {
        Command::Mask => stages::mask(&config),
        Command::Correct => stages::correct(&config),
        Command::Explain => stages::explain(&config),
        Command::Aggregate => stages::aggregate(&config),
        Command::Rank => stages::rank(&config),
        Command::Heatmap => stages::heatmap(&config),
        Command::Freq => stages::freq(&config),
        Command::Simcheck => stages::simcheck(&config),
        Command::Eval => stages::eval(&config),
        Command::Bench { text } => stages::bench(&config, text.as_deref()).map(|rows| print_bench(&rows)),
        Command::Pipeline => stages::pipeline(&config),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
