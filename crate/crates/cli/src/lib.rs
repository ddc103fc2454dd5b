//! Config-driven experiment runner for the controlled wave solver.

// `!(a < b)` is how NaN gets rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;

pub use config::{parse_config, parse_str, ExperimentKind, ExperimentSpec};
pub use error::{CliError, CliResult};
pub use experiments::{
    run_axioms, run_certificate, run_lambda_sweep, run_mode_refinement, run_single, RunOutcome, RunRecord,
    WindowVerdict, SWEEP_HEADER,
};
