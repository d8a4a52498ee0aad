//! Numerical library for stochastically perturbed non-holonomic mechanical
//! systems.
//!
//! The crate builds constrained Brownian motion from a metric and a
//! constraint distribution, computes the Chaplygin drift one-form and drift
//! vector on the shape space, decides preserved-measure / time-reversibility
//! questions, integrates the resulting SDEs and mean-reconstruction ODEs,
//! and ships the two-wheeled robot and snakeboard as fully parameterized
//! systems.

pub mod chaplygin;
pub mod constraints;
pub mod csv;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod reconstruction;
pub mod sde;
pub mod systems;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
