//! Experiment runner for iterated piecewise-stationary random functions.
//!
//! [`run`] simulates every epoch of a configured schedule, estimates each
//! epoch's invariant measure, samples the distance series and evaluates the
//! bounds; [`write_run`] stores the result with a hashed manifest.
//!
//! ```no_run
//! use ipsrf_cli::{run, write_run, ExperimentConfig};
//!
//! let config = ExperimentConfig::maple_leaf();
//! let artifacts = run(&config, 1).unwrap();
//! write_run(&artifacts, std::path::Path::new("out"), true).unwrap();
//! ```

// Range checks are written `!(max > min)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod figures;
pub mod output;

pub use analysis::{evaluate_bounds, BoundsOutcome, InvariantInput, IterateRow, SubsequentRow};
pub use config::{ExperimentConfig, Validated, SCHEMA_VERSION};
pub use error::{CliError, CliResult};
pub use experiment::{run, series_steps, DistanceRow, EpochArtifacts, RunArtifacts};
pub use output::{sha256_hex, summarize, write_run, FileEntry, Manifest, Summary};
