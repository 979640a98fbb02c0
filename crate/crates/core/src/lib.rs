//! Influence-optimistic upper bounds for factored Dec-POMDPs.
//!
//! A large factored model is split into sub-problems. Each sub-problem is
//! solved with its missing influences chosen optimistically, and the local
//! bounds add up to a global upper bound on the optimal value.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod domains;
pub mod error;
pub mod flat;
pub mod index;
pub mod io_decpomdp;
pub mod io_mmdp;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod report;
pub mod subproblem;
pub mod vector;

pub use error::{Error, Result};
pub use model::FactoredDecPOMDP;
pub use subproblem::{LocalModel, Partition, SubProblem};
