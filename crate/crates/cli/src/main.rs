use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use embedprobe::bench::{emit_reports, parse_config, run_experiment};
use embedprobe::embeddings::{load_embeddings, save_embeddings};
use embedprobe::reduce::ReductionSpec;

/// Probe word-embedding spaces with linear and RBF classifiers.
#[derive(Debug, Parser)]
#[command(name = "embedprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment matrix and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a reduction pipeline to an embedding file.
    Reduce {
        #[arg(long)]
        embeddings: PathBuf,
        /// e.g. `truncate:31` or `standardize,pca:10`
        #[arg(long)]
        spec: ReductionSpec,
        #[arg(long)]
        out: PathBuf,
        /// Average repeated words instead of rejecting the file.
        #[arg(long)]
        collapse: bool,
    },
    /// Print the size and value range of an embedding file.
    Inspect {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        collapse: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            workers,
            seed,
            out,
        } => {
            let mut config = parse_config(&config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            log::info!("running {} cells on {workers} workers", config.cell_count());
            let result = run_experiment(&config, workers)?;
            emit_reports(&result, &config.output_dir)?;
            println!(
                "{} cells completed, {} failed; reports in {}",
                result.reports.len(),
                result.errors.len(),
                config.output_dir.display()
            );
            for error in &result.errors {
                eprintln!("failed: {}: {}", error.key.label(), error.message);
            }
            Ok(if result.errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Reduce {
            embeddings,
            spec,
            out,
            collapse,
        } => {
            let set = load_embeddings(&embeddings, collapse)?;
            let reduced = spec.apply(&set)?;
            save_embeddings(&reduced, &out)?;
            println!(
                "wrote {} words × {} dims ({spec}) to {}",
                reduced.len(),
                reduced.dim(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { embeddings, collapse } => {
            let set = load_embeddings(&embeddings, collapse)?;
            let (min, max) = set.value_range();
            println!("name: {}", set.name());
            println!("words: {}", set.len());
            println!("dims: {}", set.dim());
            println!("min: {min}");
            println!("max: {max}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Exit code 2 is reserved for partial failures, so usage errors exit 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
