//! Experiment runner around the `geodesic-reeb` library: configuration,
//! task dispatch, perturbation scans and artifact emission.

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod runner;
pub mod scan;

pub use config::{parse, ExperimentConfig, Family, Task};
pub use error::LabError;
pub use runner::{execute, run, Artifact, Outcome};
pub use scan::{elliptic_scan, ScanOptions, ScanReport};
