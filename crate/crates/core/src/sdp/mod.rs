//! Feasibility oracle and certificate search.

mod certify;
mod solver;
pub mod sweep;

pub use certify::*;
pub use solver::*;
