//! Group L0-regularized least squares.
//!
//! This crate fits linear models where coefficients are selected in
//! pre-specified, non-overlapping groups, penalizing the *number* of active
//! groups rather than shrinking them. It provides:
//!
//! - fast approximate solvers: cyclic block coordinate descent
//!   ([`heuristics::bcd_fit`]), local combinatorial search
//!   ([`heuristics::local_search_fit`]) and proximal-gradient variants;
//! - an exact branch-and-bound solver ([`bnb::solve_exact`]) over a Big-M /
//!   perspective mixed-integer formulation, returning certified optimality
//!   gaps;
//! - sparse additive models: per-covariate B-spline expansions with roughness
//!   penalties that assemble into the same quadratic core ([`additive`]);
//! - synthetic benchmark generation, support-recovery metrics, and tuning
//!   helpers ([`bench`]).
//!
//! The problem solved throughout is
//!
//! ```text
//! min_theta  l(theta) + lambda0 * #{g : theta_g != 0}
//!            + lambda1 * sum_g w_g ||theta_g||_2 + lambda2 * ||theta||_2^2
//! ```
//!
//! where `l` is a least-squares loss `||y - X theta||^2` or an explicit
//! quadratic `theta' W theta + <b, theta> + c`.

pub mod additive;
pub mod bench;
pub mod bnb;
pub mod heuristics;
pub mod io;
pub(crate) mod linalg;
pub mod model;
pub mod prox;
pub mod relax;

use thiserror::Error;

/// Errors produced by model construction, solvers, and file ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix has the wrong length along the named dimension.
    #[error("dimension mismatch for `{name}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Structurally invalid input (bad group partition, non-finite data, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Inconsistent or unsupported solver configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A contract between solver components was violated by the caller.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Failure while reading or writing data files.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text data (CSV, group file, or key=value config).
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use model::{GroupPartition, Penalty, QuadObjective, Solution};
