//! Optimal control of quasilinear elliptic equations with a piecewise-smooth
//! diffusion coefficient `b(x) + a(y)`, together with numerical checks of
//! first- and second-order optimality conditions.
//!
//! The crate is organised bottom-up:
//!
//! * [`pc2`] represents the nonsmooth coefficient `a`.
//! * [`discretization`] provides uniform P1 meshes, exact sub-element
//!   quadrature, sparse assembly and linear solvers.
//! * [`problem`] bundles the data of an optimal control problem.
//! * [`solvers`] computes states, linearized states and adjoints.
//! * [`reduced`] evaluates the reduced objective, its gradient, and a
//!   projected-gradient optimizer with first-order diagnostics.
//! * [`second_order`] evaluates the curvature functionals, the jump
//!   functional and second-order verdicts.
//! * [`config`] parses JSON experiment descriptions.

pub mod config;
pub mod discretization;
pub mod error;
pub mod parallel;
pub mod pc2;
pub mod problem;
pub mod reduced;
pub mod second_order;
pub mod solvers;

pub use discretization::{GridFunction, Mesh};
pub use error::{Error, Result};
pub use parallel::Execution;
pub use pc2::{Pc2Coefficient, PolynomialPiece};
pub use problem::{BoxBounds, Objective, ProblemSpec, TrackingObjective};
