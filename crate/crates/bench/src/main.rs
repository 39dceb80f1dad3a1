use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use asmd_bench::config::ExperimentConfig;
use asmd_bench::runner::{self, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asmd-bench", version, about = "Run finite-sum solver experiments")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every section of a config file, writing one CSV per run and a manifest.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Record measured wall-clock times (makes outputs differ between reruns).
        #[arg(long)]
        timing: bool,
    },
    /// Print the reference optimum of every run's problem.
    Reference { config: PathBuf },
    /// Fit the slope of log gap against log stage over a window of a trace CSV.
    Rate {
        trace: PathBuf,
        /// Inclusive window `first:last`.
        #[arg(long, default_value = "5:50")]
        window: String,
        /// End the window at the last gap above this resolution.
        #[arg(long)]
        resolution: Option<f64>,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("window '{s}' must look like first:last"))?;
    let (a, b) = (a.trim().parse()?, b.trim().parse()?);
    if a > b {
        return Err(anyhow!("window '{s}' is empty"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out_dir, timing } => ExperimentConfig::load(&config).and_then(|c| {
            let outcomes =
                runner::run_experiment(&c, &RunOptions { out_dir: out_dir.clone(), threads: cli.threads, timing })?;
            for o in outcomes {
                if let Ok(t) = &o.result {
                    let gap = t.last().and_then(|r| r.gap).map(|g| format!("{g:e}")).unwrap_or_else(|| "-".into());
                    println!("{}: {} records, final gap {gap}", o.name, t.records.len());
                }
            }
            println!("wrote {}", out_dir.join(runner::MANIFEST).display());
            Ok(())
        }),
        Command::Reference { config } => ExperimentConfig::load(&config).and_then(|c| {
            let refs = runner::references(&c, cli.threads)?;
            let mut failed = false;
            for run in &c.runs {
                match &refs[&runner::reference_key(run)] {
                    Ok(v) => println!("{} = {v:?}", run.name),
                    Err(e) => {
                        failed = true;
                        eprintln!("{}: {e}", run.name)
                    }
                }
            }
            if failed {
                Err(anyhow!("some reference optima failed"))
            } else {
                Ok(())
            }
        }),
        Command::Rate { trace, window, resolution } => parse_window(&window).and_then(|(a, b)| {
            let slope = runner::rate_from_csv(&trace, a, b, resolution)?;
            println!("{slope}");
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
