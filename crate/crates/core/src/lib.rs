//! Variational and optimal-control problems with delayed arguments on time
//! scales whose backward jump is `rho(t) = q t - h`.
//!
//! The crate covers the difference case (`q = 1`), the quantum case
//! (`h = 0`) and the mixed case on finite grids, solves the discrete
//! stationarity conditions by Newton's method and checks the resulting
//! trajectories against the delayed Euler-Lagrange equations and the
//! necessary conditions of the control problem.

pub mod cli;
pub mod error;
pub mod expr;
pub mod functions;
pub mod linalg;
pub mod nabla;
pub mod newton;
pub mod optimal_control;
pub mod problems;
pub mod timescale;
pub mod variational;

pub use error::{Error, Result};
pub use newton::SolverOptions;
pub use timescale::{Grid, TimeScaleSpec};
pub use variational::{Trajectory, VariationalProblem};
