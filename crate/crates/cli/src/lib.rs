//! Library surface of the command-line driver, exposed so integration tests
//! can call the runners directly.

pub mod manifest;
pub mod output;
pub mod runners;

pub use manifest::{ExperimentKind, ExperimentManifest};
pub use runners::{run, RunError, RunResult, RunSummary};
