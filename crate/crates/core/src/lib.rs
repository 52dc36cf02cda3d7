//! Risk-controlling prediction sets for generated programs.
//!
//! A generated program is an abstract syntax tree whose nodes carry the
//! model's negative log-probability. Pruning whole subtrees turns it into a
//! *partial program*, which stands for every complete program that extends
//! it. This crate picks how aggressively to prune by calibrating a single
//! budget `λ` with Learn-Then-Test: binomial-tail p-values plus a
//! family-wise error rate procedure, so that with probability `1 - δ` over
//! the calibration data the set misses every correct program at most an
//! `α` fraction of the time.
//!
//! Modules:
//! - [`ast`]: annotated trees, node identity across trees, canonical form.
//! - [`prune`]: exact (tree DP), brute-force and greedy pruners.
//! - [`risk`]: set membership and the empirical structured risk.
//! - [`stats`], [`fwer`], [`ltt`]: p-values, FWER control, calibration.
//! - [`selective`]: labeling sampled programs with a bounded error while
//!   skipping most test executions.
//! - [`sim`]: a synthetic Monte-Carlo harness for all of the above.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! drivers and the command line live in the `progset` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ast;
pub mod exact;
pub mod fwer;
pub mod ltt;
pub mod prune;
pub mod risk;
pub mod selective;
pub mod sim;
pub mod stats;

pub use ast::{AnnotatedAst, AstError, AstNode, NodeId, NodePath};
pub use ltt::{calibrate, predict, CalibrationError, CalibrationResult, LambdaGrid, LttConfig};
pub use prune::{
    prune_bruteforce, prune_exact, prune_greedy, Deadline, NoDeadline, PruneConfig, PruneError,
    RemovalSet,
};
pub use risk::{contains, empirical_risk, set_loss, CalibrationRecord, PartialProgram, Strategy};
