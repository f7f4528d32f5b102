//! Command-line front end: scenario files, runs, refinement studies, audits
//! of stored runs and the friction-solver fuzz suite.
//!
//! Exit codes used by `msdiff`: 0 success, 1 any error, 2 stability failure.

pub mod commands;
pub mod fuzz;
pub mod output;
pub mod scenario;

pub use commands::{audit_dir, refine, refine_scenario, run, run_level, Emit, LevelResult, RefinementTable, RunConfig, RunOutcome};
pub use fuzz::{run_fuzz, FuzzReport};
pub use scenario::{format_scenario, parse_scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_STABILITY: i32 = 2;

/// Exit status for an error returned by any command.
pub fn exit_code(error: &crate::Error) -> i32 {
    if error.is_stability_failure() {
        EXIT_STABILITY
    } else {
        EXIT_ERROR
    }
}
