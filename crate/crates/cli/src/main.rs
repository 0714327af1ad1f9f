use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tslab::error::{CliError, CliResult};
use tslab::report::{render, Format, RunReport};
use tslab::spec::ExperimentSpec;
use tslab::{default_output_dir, run, RunOptions};
use tslab_core::init::inspect_checkpoint;

/// Desk-scale forecasting experiments on pretrained transformer backbones.
#[derive(Parser)]
#[command(name = "tslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec end to end.
    Run {
        spec: PathBuf,
        /// Output directory; defaults to the spec's `output_dir`, then
        /// `$TSLAB_OUTPUT_ROOT/<name>`, then `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check a spec without running anything.
    Validate { spec: PathBuf },
    /// Render a finished run's report.
    Report {
        run_dir: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: Format,
    },
    #[command(subcommand)]
    Checkpoint(CheckpointCommand),
}

#[derive(Subcommand)]
enum CheckpointCommand {
    /// Print a checkpoint's header and tensor table as JSON.
    Inspect { file: PathBuf },
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run { spec, out, quiet } => {
            let s = ExperimentSpec::load(&spec)?;
            let out_dir = out.unwrap_or_else(|| default_output_dir(&s));
            let report = run(&s, &RunOptions { out_dir: out_dir.clone(), quiet })?;
            print!("{}", report.to_markdown());
            println!("\nartifacts in {}", out_dir.display());
        }
        Command::Validate { spec } => {
            let s = ExperimentSpec::load(&spec)?;
            let diags = s.validate();
            if !diags.is_empty() {
                return Err(CliError::Invalid(diags));
            }
            println!("{}: ok", spec.display());
        }
        Command::Report { run_dir, format } => {
            print!("{}", render(&RunReport::load(&run_dir)?, format)?);
        }
        Command::Checkpoint(CheckpointCommand::Inspect { file }) => {
            let info = inspect_checkpoint(&file)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
