//! Simulation and verification laboratory for a nearest-neighbour random walk
//! in a dynamic random environment made of independent lazy simple random
//! walks started from a Poisson field.
//!
//! The crate is organised around the objects of that model:
//!
//! * [`kernel`] — exact discrete heat kernels for the lazy walk.
//! * [`env`] — finite-window realisations of the particle cloud.
//! * [`walker`] — the driven walk and its monotone couplings.
//! * [`cones`] — exact integer cone geometry (records, parallelograms).
//! * [`regen`] — regeneration times with finite-horizon certificates.
//! * [`renorm`] — multiscale ladders, box events and the tail-sum bound.
//! * [`slt`] — soft-local-time sampling and domination couplings.
//! * [`stats`] — seeded ensemble estimators and hypothesis tests.
//! * [`verify`] — the end-to-end verification battery used by the CLI and
//!   by the acceptance test suite.
//!
//! Every randomised routine is a deterministic function of an explicit
//! 64-bit seed; replicas get independent counter-derived substreams so that
//! results do not depend on thread count or on window enlargement.

pub mod cones;
pub mod env;
pub mod kernel;
pub mod regen;
pub mod renorm;
pub mod rng;
pub mod slt;
pub mod stats;
pub mod testing;
pub mod verify;
pub mod walker;

use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter was outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A documented precondition between arguments was violated.
    #[error("precondition error: {0}")]
    Precondition(String),
    /// A query left the region where answers are exact.
    #[error("range error: {0}")]
    Range(String),
    /// A resource guard (memory or work estimate) refused the run.
    #[error("resource guard: {0}")]
    Resource(String),
    /// An estimator could not produce a usable value.
    #[error("estimator error: {0}")]
    Estimator(String),
    /// A sampler exhausted its extension budget.
    #[error("simulation error: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
