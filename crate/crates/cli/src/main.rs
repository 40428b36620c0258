//! `fpd` command line: run experiment matrices and summarize their logs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpd_core::harness::{expand_sweep, run_cells, summarize, ExperimentConfig, SweepAxis};
use fpd_core::FpdError;

#[derive(Parser)]
#[command(name = "fpd", version, about = "Federated learning poisoning-defense simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment matrix.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...`; repeat for a cartesian product.
        #[arg(long)]
        sweep: Vec<String>,
        /// Output directory; defaults to the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild summary tables from a results directory.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(command: Command) -> Result<(), FpdError> {
    match command {
        Command::Run { config, sweep, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut base = ExperimentConfig::parse(&text)?;
            base.apply_env_seed()?;
            let axes = sweep.iter().map(|s| s.parse()).collect::<Result<Vec<SweepAxis>, _>>()?;
            let cells = expand_sweep(&base, &axes)?;
            let out_dir = out.unwrap_or_else(|| base.output.clone());
            let paths = run_cells(&cells, &out_dir)?;
            println!("{} cell(s) written to {}", paths.len(), out_dir.display());
            print!("{}", std::fs::read_to_string(out_dir.join("summary.txt"))?);
        }
        Command::Summarize { input } => {
            summarize(&input)?;
            print!("{}", std::fs::read_to_string(input.join("summary.txt"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ FpdError::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
