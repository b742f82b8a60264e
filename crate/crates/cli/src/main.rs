use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod experiment;
mod gen;

use config::{split_args, ExperimentConfig};
use error::CliError;

/// Runs parameter-server consistency experiments on the simulator.
#[derive(Parser)]
#[command(name = "stalesync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config; any `--key value` overrides a config entry.
    Run {
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Run several configs that differ only in their consistency model.
    Compare {
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Write a synthetic `lsq` or `mf` data file (`--out PATH` required).
    GenData {
        kind: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

/// 0: finished, 2: a run diverged (outputs still written).
fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Run { args } => {
            let (paths, overrides) = split_args(&args)?;
            let [path] = paths.as_slice() else {
                return Err(CliError::Usage(format!("run takes exactly one config, got {}", paths.len())));
            };
            let cfg = ExperimentConfig::load(&PathBuf::from(path), &overrides)?;
            let exp = experiment::execute(&cfg)?;
            let dir = experiment::output_dir(&cfg);
            experiment::write_outputs(&dir, &exp)?;
            let s = &exp.summary;
            println!(
                "{} {}: final objective {:.6e}{} -> {}",
                s.workload,
                s.model,
                s.final_objective,
                if s.diverged { " (diverged)" } else { "" },
                dir.display()
            );
            Ok(exp.diverged())
        }
        Command::Compare { args } => {
            let (paths, overrides) = split_args(&args)?;
            let configs = paths
                .iter()
                .map(|p| ExperimentConfig::load(&PathBuf::from(p), &overrides))
                .collect::<Result<Vec<_>, _>>()?;
            let dir = experiment::output_dir(&configs[0]);
            let diverged = experiment::compare(&configs, &dir)?;
            println!("compared {} configs -> {}", configs.len(), dir.join("compare.csv").display());
            Ok(diverged)
        }
        Command::GenData { kind, args } => {
            let (extra, overrides) = split_args(&args)?;
            if !extra.is_empty() {
                return Err(CliError::Usage(format!("unexpected arguments: {}", extra.join(" "))));
            }
            println!("{}", gen::gen_data(&kind, &overrides)?);
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
