//! Config-driven experiment runner for ensemble target adaptation.
//!
//! Every recipe appends to `runs.jsonl` in its output directory and skips
//! (config hash, seed, variant) keys already recorded there as successful.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod recipes;
pub mod results;
pub mod shift;
pub mod table;

pub use config::ExperimentConfig;
pub use results::{RunRecord, RunStatus};

/// Process exit status for a finished recipe: 0 when every record succeeded.
pub fn exit_code(records: &[RunRecord]) -> i32 {
    if !records.is_empty() && records.iter().all(RunRecord::is_ok) {
        0
    } else {
        1
    }
}
