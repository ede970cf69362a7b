//! Scenario runner for the diana scheduling simulator: TOML scenarios in,
//! CSV results and text summaries out.

pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{compare, compare_loaded, run_scenario, CliError, RunOptions};
pub use scenario::{load_scenario, Scenario, ScenarioError};
