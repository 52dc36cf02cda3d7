//! File formats, multi-threaded drivers, reports and the command-line front
//! end for [`progset_core`].
//!
//! - [`formats`]: JSON schemas for trees, records, results and outcomes.
//! - [`config`]: the run configuration file.
//! - [`executor`]: the subprocess test-case executor.
//! - [`parallel`]: calibration and trial runners on a thread pool.
//! - [`report`]: sweep reports as JSON, CSV and SVG.
//! - [`validation`]: the checks run by `progset validate`.
//! - [`cli`]: argument parsing and subcommands.

pub mod cli;
pub mod config;
pub mod executor;
pub mod formats;
pub mod parallel;
pub mod report;
pub mod validation;

pub use progset_core as core;
