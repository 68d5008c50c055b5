//! Nonlinear state estimation with a certified mean-square-error bound.
//!
//! This crate implements a bound-based extended Kalman filter: between
//! observations it integrates an upper bound (in the positive-semidefinite
//! order) on the estimate mean-square-error matrix, and at observation
//! times it applies a minimax-gain linear update in Joseph form. The bound
//! is what sets the filter gain, so the filter cannot talk itself into
//! overconfidence the way a conventionally linearized filter can.
//!
//! The bound propagation rests on three pieces of machinery, each usable on
//! its own:
//!
//! * [`frames`] — positively-spanning frames of symmetric matrices and
//!   dual-cone generator sets, computed offline;
//! * [`solver`] — self-contained dense LP (simplex) and SDP (barrier)
//!   solvers for the per-step subproblems;
//! * [`certificate`] — sum-of-squares certificates bounding the derivative
//!   of the error matrix along each frame direction, with a closed form for
//!   linear systems;
//! * [`bound`] — assembly of the derivative polytope, the dual-cone bound
//!   on it, and the bound ODE integration;
//! * [`filter`] — the bound-based filter recursion plus a classical
//!   continuous-discrete EKF baseline;
//! * [`sim`] — ground-truth SDE simulation, the bundled limit-cycle example
//!   model, and the Monte-Carlo comparison harness.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `bekf` binary for the file-driven command-line interface.

pub mod error;
pub mod frames;
pub mod certificate;
pub mod model;
pub mod poly;
pub mod solver;
pub mod sym;

pub use error::{Error, Result};
