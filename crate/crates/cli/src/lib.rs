//! Experiment specs, runner and reports for the `tslab` command.

pub mod error;
pub mod kinds;
pub mod report;
pub mod run;
pub mod spec;

pub use error::{CliError, CliResult};
pub use report::{Format, MetricRow, RunReport, SeedResult};
pub use run::{default_output_dir, run, RunOptions};
pub use spec::{ExperimentKind, ExperimentSpec, Preset};
