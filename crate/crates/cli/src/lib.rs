//! Scenario runner for the feedback-stabilization simulator: figure presets,
//! JSON configuration, CSV/JSON artifacts, parameter sweeps and the
//! steady-state verification report.

pub mod config;
pub mod error;
pub mod presets;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{resolve_runs, resolve_sweep, ScenarioConfig, SweepConfig};
pub use error::{CliError, Result};
pub use run::{run_scenario, RunOutput, RunSummary, SeriesTable};
pub use sweep::{run_sweep, SweepTable};
pub use verify::{run_verification, VerificationReport};
