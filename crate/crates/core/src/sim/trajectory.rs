//! Recorded trajectories and stationary points.

use alloc::vec::Vec;

use crate::{Error, Result, SectorBounds, SymMatrix};

/// Full state history is kept only up to this many iterates.
pub const MAX_RETAINED_ITERATES: usize = 10_000;
/// Full state history is kept only up to this stacked dimension `n * d`.
pub const MAX_RETAINED_DIM: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Topology {
    Centralized,
    Distributed,
}

/// Stationary point. Stacked vectors have length `n * d`, agent-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedPoint {
    /// Minimizer of the global objective in `R^d`.
    pub x_min: Vec<f64>,
    pub x_star: Vec<f64>,
    pub z_star: Vec<f64>,
    /// Empty for centralized runs.
    pub y_star: Vec<f64>,
    pub u_star: Vec<f64>,
    /// Empty for centralized runs.
    pub v_star: Vec<f64>,
    pub f_star: f64,
}

/// States `ξ = (z, y)` and inputs `ζ = (x, u, v)` at one iterate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterState {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRecord {
    pub topology: Topology,
    pub n: usize,
    pub d: usize,
    /// Step-size (`eta1` for distributed runs).
    pub eta: f64,
    pub eta2: Option<f64>,
    pub lambda: Option<f64>,
    pub f_bounds: SectorBounds,
    pub phi_bounds: SectorBounds,
    /// Weight of the `ξ`-norm; the identity (and `p_is_default`) when no
    /// certificate was supplied, and always for centralized runs.
    pub p: SymMatrix,
    pub p_is_default: bool,
    pub fixed_point: FixedPoint,
    /// `D_{φ*}(z_k, z★)`, summed over agents.
    pub bregman: Vec<f64>,
    /// `‖x_k - x★‖²`.
    pub dist_sq: Vec<f64>,
    /// `‖ξ_k - ξ★‖²_{P⊗I}` (centralized: `‖z_k - z★‖²`).
    pub pnorm_sq: Vec<f64>,
    /// `f(x_k) - f★` (distributed: `Σ_i (f(x_i) - f★)`).
    pub fgap: Vec<f64>,
    /// Gap at the ergodic average for `K = 1, 2, ...`: entry `K - 1`.
    pub ergodic_gap: Vec<f64>,
    pub states: Option<Vec<IterState>>,
}

impl TrajectoryRecord {
    /// Number of recorded iterates.
    pub fn len(&self) -> usize {
        self.bregman.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bregman.is_empty()
    }

    pub fn states(&self) -> Result<&[IterState]> {
        self.states.as_deref().ok_or(Error::StatesNotRetained)
    }

    /// Largest `K` for which an ergodic average is defined.
    pub fn max_ergodic_k(&self) -> usize {
        self.ergodic_gap.len()
    }
}

/// Ergodic average of the primal iterates.
///
/// Centralized: mean of `x^(1), ..., x^(K)`. Distributed: per-agent mean of
/// `x^(0), ..., x^(K-1)` (stacked).
pub fn ergodic_average(traj: &TrajectoryRecord, k: usize) -> Result<Vec<f64>> {
    let states = traj.states()?;
    let (first, hi) = match traj.topology {
        Topology::Centralized => (1, states.len().saturating_sub(1)),
        Topology::Distributed => (0, states.len()),
    };
    if k == 0 || k > hi {
        return Err(Error::OutOfRange { index: k, lo: 1, hi });
    }
    let mut acc = alloc::vec![0.0; states[0].x.len()];
    for s in &states[first..first + k] {
        for (a, b) in acc.iter_mut().zip(&s.x) {
            *a += b;
        }
    }
    acc.iter_mut().for_each(|v| *v /= k as f64);
    Ok(acc)
}
