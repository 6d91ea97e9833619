//! Scenario runner, benchmark harness and file formats for the `nmpcm-core`
//! controller.

pub mod cli;
pub mod config;
pub mod io;
pub mod oracle;
pub mod sim;
pub mod sweep;

pub use config::{load, ConfigError, ScenarioFile};
pub use sim::{run_scenario, ControllerKind, ScenarioConfig, SimError};
