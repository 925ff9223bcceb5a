//! Exact and inexact online mirror descent over simplices, polytopes and intervals.
//!
//! The crate is layered bottom-up: [`geometry`] supplies regularizers and domains,
//! [`subproblem`] solves and certifies single rounds, [`trajectories`] runs and
//! constructs whole trajectories, [`balance`] provides diagnostics over them and
//! [`instances`] generates loss streams and the hard polytope family.

pub mod balance;
pub mod error;
pub mod geometry;
pub mod instances;
mod lp;
pub mod numeric;
pub mod par;
pub mod subproblem;
pub mod suites;
pub mod thresholds;
pub mod trajectories;

pub use error::{OmdError, Result};
pub use geometry::{bregman, effective_smoothness, kernel_basis, Domain, Point, Polytope, Regularizer};
pub use par::Execution;

pub use subproblem::{CertMethod, StepCertificate, StepObjective};
pub use trajectories::{NoisePolicy, RegretReport, Trajectory, TrajectoryKind};

