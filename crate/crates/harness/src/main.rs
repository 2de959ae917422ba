use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smbo_harness::config::Only;
use smbo_harness::{report, run_experiment, trial_log, RunConfig};

#[derive(Parser)]
#[command(name = "smbo-harness", version, about = "Compare the adaptive optimizer with its base optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_enum)]
        only: Option<Only>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary from a trial log and compare with the stored one.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Run { config, seeds, only, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
            }
            if let Some(only) = only {
                cfg.only = only;
            }
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            cfg.validate()?;
            let result = run_experiment(&cfg)?;
            let log = trial_log(&cfg, &result)?;
            let dir = cfg.output.dir.clone();
            report::emit_outputs(&dir, &result.summary, &log, &cfg)?;
            print!("{}", report::summary_csv(&result.summary));
            eprintln!("wrote {} trial records to {}", log.len(), dir.display());
        }
        Cmd::Replay { log } => {
            let rows = report::replay(&log)?;
            print!("{}", report::summary_csv(&rows));
            eprintln!("summary matches {}", log.display());
        }
    }
    Ok(())
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
