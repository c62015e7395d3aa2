//! Config-driven runs, parameter sweeps and the verification suites behind
//! the command-line interface.

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::ExperimentConfig;
pub use run::{execute, resolve_output_root, run_file, ExitStatus, RunOutcome, RunSummary, OUTPUT_ROOT_ENV};
pub use sweep::{sweep, SweepAxis, SweepReport};
pub use verify::{verify, Check, Suite, Verdict};
