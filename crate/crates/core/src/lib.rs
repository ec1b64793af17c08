//! Rate certificates for centralized and distributed mirror descent.
//!
//! The crate builds the quadratic-constraint matrices that abstract the
//! gradient of the objective and the mirror map, assembles the Lyapunov LMIs
//! for the centralized and distributed algorithms, decides their feasibility
//! with a small dense interior-point engine, and closes the loop by simulating
//! the algorithms and checking every certified bound on recorded trajectories.
//!
//! Everything here is `no_std` + `alloc`. File formats, the command-line
//! front end and parallel sweeps live in the `mdcert-cli` crate.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`qc`] | sector bounds, problem classes, constant QC matrices |
//! | [`lmi`] | certificate types and LMI assembly |
//! | [`sdp`] | feasibility oracle, rate bisection, analytic certificate, sweeps |
//! | [`network`] | graphs, Laplacians, consensus weights, block reduction |
//! | [`sim`] | mirror maps, objectives, centralized/distributed simulators |
//! | [`verify`] | bound checks, empirical rates, inequality suites |

#![no_std]

extern crate alloc;

mod error;
pub mod linalg;
pub mod lmi;
pub mod network;
pub mod qc;
pub mod sdp;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use qc::{Mode, ProblemClass, SectorBounds};
