//! Scenario runner, format detection and exit-status contract for the
//! `cfiblur` command-line tool.

pub mod formats;
pub mod scenario;
mod status;

pub use scenario::{bundled, run_scenario, Report, Scenario};
pub use status::{HarnessError, Status};
