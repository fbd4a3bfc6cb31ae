//! Functional Bell inequality for the two-qubit singlet over the full
//! continuum of local measurement directions.
//!
//! The library computes both sides of the inequality
//! `||P_QM||^2 > LHV bound >= <P_QM, P_HV>`:
//! quantum norms (closed form and spherical quadrature), projections of
//! local response functions onto the degree-1 subspace of L2(S2), the
//! analytic LHV bound together with a direct-search maximizer that
//! confirms it is tight, finite-settings variants with an exact
//! brute-force oracle, and a Monte Carlo layer that estimates the
//! functional from event-by-event records.

pub mod discrete;
pub mod functional;
pub mod lhv;
pub mod quantum;
pub mod simulate;
pub mod sphere;

pub use functional::{Geometry, InequalityReport};
pub use quantum::Visibility;
pub use sphere::{Direction, QuadratureGrid};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BellError {
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("invalid quadrature order: {0}")]
    InvalidOrder(String),
    #[error("non-finite integrand at node {index} (theta={theta}, phi={phi})")]
    NonFiniteIntegrand { index: usize, theta: f64, phi: f64 },
    #[error("invalid visibility {0}: must lie in [0, 1]")]
    InvalidVisibility(f64),
    #[error("invalid outcome {0}: must be -1 or +1")]
    InvalidOutcome(i8),
    #[error("invalid LHV model: {0}")]
    InvalidModel(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("instance too large for brute force: {na} + {nb} settings > {limit}")]
    BruteForceTooLarge { na: usize, nb: usize, limit: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event stream has non-uniform setting provenance ({0}); the estimator requires area-uniform settings")]
    NonUniformProvenance(String),
    #[error("need at least {need} events, got {got}")]
    TooFewEvents { need: usize, got: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BellError>;
