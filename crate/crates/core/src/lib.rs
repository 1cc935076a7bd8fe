//! Finite-dimensional quantum stochastic CP flows.
//!
//! The crate covers the Hudson–Parthasarathy quadruple algebra, Weyl operators
//! on piecewise-coherent vectors, generator (germ) structure of CP flows with
//! Choi/Kraus dilations, deterministic propagation in the vacuum and coherent
//! sectors, and Monte Carlo unravelings by diffusive and jump trajectories.

pub mod error;
pub mod flows;
pub mod generators;
pub mod ito;
pub mod matrix;
pub mod random;
pub mod trajectories;
pub mod weyl;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, SuperOperator, C64};
