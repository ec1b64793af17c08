//! Mirror maps, objective instances and the two simulators.

pub mod dgf;
pub mod objective;
mod run;
pub mod trajectory;

pub use dgf::{make_dgf, DgfKind, DgfOracle, DgfParams, MirrorMap};
pub use objective::{make_objective, ObjectiveKind, ObjectiveOracle};
pub use run::{fixed_point, run_centralized, run_distributed, seeded_start, CONSISTENCY_TOL};
pub use trajectory::{ergodic_average, FixedPoint, IterState, Topology, TrajectoryRecord};
