//! Exact p-median solver built on a Benders decomposition whose subproblems
//! are solved in closed form.
//!
//! The pipeline is: read an [`Instance`], build the [`Preprocessed`] sorted
//! distance tables, get an incumbent from [`heuristics`], then run
//! [`driver::solve`] which alternates LP solves of the master relaxation with
//! cut separation and finishes with a branch-and-cut tree search.

pub mod benders;
pub mod driver;
pub mod export;
pub mod heuristics;
pub mod instance;
pub mod master;
pub mod oracle;
pub mod simplex;

pub use benders::{BendersCut, BendersError};
pub use driver::{solve, DriverError, Params, SolveResult, SolveStatus};
pub use heuristics::{InitialMode, IntegerSolution};
pub use instance::{Dist, Instance, InstanceError, Preprocessed};
