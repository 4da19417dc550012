//! Boundary-preserving simulation of a Pearson diffusion on `[0, η]` and its
//! use as a random Dirichlet boundary for a marble sulphation model.
//!
//! Modules, bottom up:
//!
//! * [`pearson`]: coefficients, boundary classification, scale/speed densities
//!   and the Beta invariant law.
//! * [`lamperti`]: the change of variables to additive noise.
//! * [`lsst`]: the truncated-drift Euler–Maruyama sampler.
//! * [`heat_fd`]: FTCS heat solver and mesh utilities.
//! * [`sulphation`]: the coupled `(s, c)` solver via `s = u + v`.
//! * [`ensemble`]: Monte Carlo drivers and estimators.
//! * [`cli`]: config-driven experiments and CSV output.

pub mod cli;
pub mod ensemble;
pub mod heat_fd;
pub mod lamperti;
pub mod lsst;
pub mod pearson;
pub mod sulphation;

pub use heat_fd::{Field, Grid1D};
pub use lamperti::LampertiDrift;
pub use lsst::{SdePath, TruncationSpec};
pub use pearson::PearsonParams;
pub use sulphation::{BoundaryPair, MaterialParams, Quantity};
