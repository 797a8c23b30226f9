//! Scenario files, the simulation conductor, metrics and export.

pub mod builtin;
pub mod export;
pub mod metrics;
pub mod run;
pub mod schema;
pub mod sweep;

pub use export::{export_csv, fmt_num};
pub use metrics::{compare_runs, metrics, Metrics};
pub use run::{run, RunOutput};
pub use schema::{load_scenario, ControlMode, EventKind, EventSpec, Scenario};
