//! Batch front end for the metron analyses: problem files in, deterministic
//! JSON reports out.
//!
//! Exit status: `0` when the analysis is certified (a `NotMetric` verdict is
//! a successful analysis), `2` for rejected input, `3` when stabilization or
//! a residual check failed.

pub mod commands;
pub mod json;
pub mod problem;
pub mod report;

pub use commands::{run, Command, Outcome, RunOptions, Status};
