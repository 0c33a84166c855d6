//! Scenario configs, bundled presets and the `rates`, `equivalence`, `simulate` and
//! `sweep` commands behind the `faithsim` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;

pub use config::{Axis, Format, ScenarioConfig};
pub use error::CliError;
