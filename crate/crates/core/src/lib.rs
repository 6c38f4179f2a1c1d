//! Invariant measures of unknown dynamical systems from trajectory snapshots.
//!
//! The pipeline approximates the Lie derivative (Koopman generator) on a
//! polynomial dictionary with extended dynamic mode decomposition, imposes
//! invariance as linear constraints on a truncated moment vector, solves the
//! resulting moment semidefinite program and recovers either a signed
//! polynomial density or an atomic measure supported on periodic orbits.
//!
//! | module | role |
//! |---|---|
//! | [`polybasis`] | graded monomial / Chebyshev dictionaries |
//! | [`dynamics`] | snapshot generation, Poincaré sections, periodic-orbit refinement |
//! | [`edmd`] | data matrices, Koopman and Lie matrices, exact oracles |
//! | [`momentsdp`] | moment and localizing matrices, problem assembly |
//! | [`sdpsolver`] | first-order conic solver |
//! | [`recovery`] | densities, atoms, expectations, histogram baseline |
//! | [`pipeline`] | experiment configuration and orchestration |

pub mod error;
pub mod dynamics;
pub mod edmd;
pub mod momentsdp;
pub mod polybasis;
pub mod pipeline;
pub mod recovery;
pub mod sdpsolver;

pub use error::{Error, Result};
