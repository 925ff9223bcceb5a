//! Scenario files, presets and the batch runner behind the `omdlab` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

pub use config::Scenario;
pub use error::{CliError, Result};
pub use presets::{preset, preset_names, PRESETS};
pub use run::{run, validate, Assertion, RunOutcome};
