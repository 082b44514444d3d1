use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use perfhom::check;
use perfhom::config::{ExperimentConfig, ExperimentKind};
use perfhom::runner::{output_dir, run_experiment, with_pool, RunOptions};
use perfhom::Error;

#[derive(Parser)]
#[command(name = "perfhom", version, about = "Homogenization experiments on perforated domains")]
struct Cli {
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent ε-instances.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for the randomized probes (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Solve only the cell problem of a config.
    Cell { config: PathBuf },
    /// Run the built-in acceptance suite.
    Check {
        /// Run only these checks (by number).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn error_record(e: &Error) -> String {
    let mut record = json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::ConfigValidation { field, reason } = e {
        record["field"] = json!(field);
        record["reason"] = json!(reason);
    }
    record.to_string()
}

fn run(cli: &Cli, config: &PathBuf, cell_only: bool) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(config)?;
    if cell_only {
        cfg.experiment = ExperimentKind::CellOnly;
    }
    let out = output_dir(&cfg, cli.out.as_deref());
    let opts = RunOptions { workers: cli.workers, seed: cli.seed };
    let outcome = run_experiment(cfg, &out, &opts)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config, false),
        Command::Cell { config } => run(&cli, config, true),
        Command::Check { only } => {
            let ids: Vec<usize> = if only.is_empty() { check::CHECKS.iter().map(|c| c.0).collect() } else { only.clone() };
            let outcomes = with_pool(cli.workers, || {
                ids.iter()
                    .map(|&id| {
                        let o = check::run_check(id);
                        if let Some(o) = &o {
                            println!("{o}");
                        }
                        o.ok_or(id)
                    })
                    .collect::<Vec<_>>()
            });
            match outcomes {
                Ok(list) => {
                    if let Some(Err(id)) = list.iter().find(|o| o.is_err()) {
                        Err(Error::InvalidArgument(format!("no check numbered {id}")))
                    } else if list.iter().all(|o| o.as_ref().is_ok_and(|o| o.passed)) {
                        Ok(())
                    } else {
                        eprintln!("{}", json!({ "error": "CheckFailed", "message": "one or more checks failed" }));
                        return ExitCode::FAILURE;
                    }
                }
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
