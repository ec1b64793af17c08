//! Parameter sweeps over condition numbers, spectral gaps and step-sizes.
//!
//! Strongly convex modes read `kappa_f`, `kappa_phi` as `L_f`, `L_phi` with
//! `mu_f = mu_phi = 1`. Convex modes read `kappa_f` as `L_f` with `mu_f = 0`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::certify::*;
use crate::{Error, ProblemClass, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SweepMode {
    CentralizedSc,
    CentralizedConvex,
    DistributedSc,
    DistributedConvex,
}

impl SweepMode {
    pub fn is_distributed(self) -> bool {
        matches!(self, SweepMode::DistributedSc | SweepMode::DistributedConvex)
    }

    pub fn is_convex(self) -> bool {
        matches!(self, SweepMode::CentralizedConvex | SweepMode::DistributedConvex)
    }
}

/// Step-size grid: explicit values or `steps` log-spaced points.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum EtaGrid {
    Values(Vec<f64>),
    Log { lo: f64, hi: f64, steps: usize },
}

impl EtaGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        match self {
            EtaGrid::Values(v) => {
                if v.is_empty() || v.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(Error::param("eta1", "grid values must be positive and finite"));
                }
                Ok(v.clone())
            }
            EtaGrid::Log { lo, hi, steps } => log_grid(*lo, *hi, *steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub kappa_f: Vec<f64>,
    pub kappa_phi: Vec<f64>,
    /// Required for distributed modes, ignored otherwise.
    #[cfg_attr(feature = "serde", serde(default))]
    pub lambda: Vec<f64>,
    /// Defaults to [`default_eta_grid`] of each cell.
    #[cfg_attr(feature = "serde", serde(default))]
    pub eta1: Option<EtaGrid>,
    /// One row per cell at the best grid step-size (the exact optimum for
    /// `centralized_sc`) instead of one row per grid point.
    #[cfg_attr(feature = "serde", serde(default))]
    pub optimize_eta1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub kappa_f: f64,
    pub kappa_phi: f64,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RowStatus {
    Certified,
    /// No certificate; the rate column holds the trivial value (`rho = 1`, `eps = 0`).
    Infeasible,
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Certified => "certified",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub kappa_f: f64,
    pub kappa_phi: f64,
    pub lambda: Option<f64>,
    pub eta1: Option<f64>,
    /// `rho` (strongly convex modes) or `eps` (convex modes); NaN on error.
    pub rate: f64,
    pub status: RowStatus,
    pub message: Option<String>,
}

fn check_list(name: &'static str, v: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if v.is_empty() {
        return Err(Error::param(name, "must be a nonempty list"));
    }
    if !v.iter().all(|&x| x.is_finite() && ok(x)) {
        return Err(Error::param(name, "entry out of range"));
    }
    Ok(())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let min_kf = if self.mode.is_convex() { 0.0 } else { 1.0 };
        check_list("kappa_f", &self.kappa_f, |k| k >= min_kf && k > 0.0)?;
        check_list("kappa_phi", &self.kappa_phi, |k| k >= 1.0)?;
        if self.mode.is_distributed() {
            check_list("lambda", &self.lambda, |l| (0.0..1.0).contains(&l))?;
        }
        if let Some(g) = &self.eta1 {
            g.points()?;
        }
        Ok(())
    }

    /// Cells in grid order: `kappa_f` outermost, then `kappa_phi`, then `lambda`.
    pub fn cells(&self) -> Vec<SweepCell> {
        let lambdas: Vec<Option<f64>> = if self.mode.is_distributed() {
            self.lambda.iter().map(|&l| Some(l)).collect()
        } else {
            alloc::vec![None]
        };
        let mut out = Vec::new();
        for &kappa_f in &self.kappa_f {
            for &kappa_phi in &self.kappa_phi {
                for &lambda in &lambdas {
                    out.push(SweepCell {
                        index: out.len(),
                        kappa_f,
                        kappa_phi,
                        lambda,
                    });
                }
            }
        }
        out
    }

    pub fn class_of(&self, cell: &SweepCell) -> Result<ProblemClass> {
        if self.mode.is_convex() {
            ProblemClass::from_params(0.0, cell.kappa_f, 1.0, cell.kappa_phi)
        } else {
            ProblemClass::from_conditions(cell.kappa_f, cell.kappa_phi)
        }
    }

    fn grid_for(&self, pc: &ProblemClass) -> Result<Vec<f64>> {
        match &self.eta1 {
            Some(g) => g.points(),
            None => Ok(default_eta_grid(pc)),
        }
    }
}

fn row(cell: &SweepCell, eta1: Option<f64>, rate: f64, status: RowStatus, message: Option<String>) -> RateRow {
    RateRow {
        kappa_f: cell.kappa_f,
        kappa_phi: cell.kappa_phi,
        lambda: cell.lambda,
        eta1,
        rate,
        status,
        message,
    }
}

/// Turns one certification outcome into a row.
fn outcome(cell: &SweepCell, eta1: Option<f64>, convex: bool, r: Result<Option<(f64, f64)>>) -> RateRow {
    let trivial = if convex { 0.0 } else { 1.0 };
    match r {
        Ok(Some((eta, rate))) => row(cell, Some(eta), rate, RowStatus::Certified, None),
        Ok(None) => row(cell, eta1, trivial, RowStatus::Infeasible, None),
        Err(Error::NoCertificate(m)) => row(cell, eta1, trivial, RowStatus::Infeasible, Some(m)),
        Err(e) => row(cell, eta1, f64::NAN, RowStatus::Error, Some(e.to_string())),
    }
}

fn no_cert_to_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NoCertificate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Rows of one cell.
pub fn run_cell(cfg: &SweepConfig, cell: &SweepCell, opts: &EngineOptions) -> Vec<RateRow> {
    let convex = cfg.mode.is_convex();
    let pc = match cfg.class_of(cell) {
        Ok(pc) => pc,
        Err(e) => return alloc::vec![row(cell, None, f64::NAN, RowStatus::Error, Some(e.to_string()))],
    };
    let grid = match cfg.grid_for(&pc) {
        Ok(g) => g,
        Err(e) => return alloc::vec![row(cell, None, f64::NAN, RowStatus::Error, Some(e.to_string()))],
    };
    let lambda = cell.lambda.unwrap_or(0.0);

    if cfg.optimize_eta1 {
        let r = match cfg.mode {
            SweepMode::CentralizedSc => no_cert_to_none(min_rho_centralized(&pc, None, opts)).map(|c| c.map(|c| (c.eta, c.rho))),
            SweepMode::CentralizedConvex => {
                no_cert_to_none(max_eps_centralized(&pc, &grid, opts)).map(|c| c.map(|c| (c.eta, c.eps)))
            }
            SweepMode::DistributedSc => {
                no_cert_to_none(min_rho_distributed(&pc, lambda, &grid, opts)).map(|c| c.map(|c| (c.vars.eta1, c.rho)))
            }
            SweepMode::DistributedConvex => {
                no_cert_to_none(max_eps_distributed(&pc, lambda, &grid, opts)).map(|c| c.map(|c| (c.vars.eta1, c.eps)))
            }
        };
        return alloc::vec![outcome(cell, None, convex, r)];
    }

    grid.iter()
        .map(|&eta| {
            let r = match cfg.mode {
                SweepMode::CentralizedSc => {
                    no_cert_to_none(min_rho_centralized(&pc, Some(eta), opts)).map(|c| c.map(|c| (c.eta, c.rho)))
                }
                SweepMode::CentralizedConvex => max_eps_centralized_at(&pc, eta, opts).map(|c| c.map(|c| (c.eta, c.eps))),
                SweepMode::DistributedSc => {
                    min_rho_distributed_at(&pc, lambda, eta, opts).map(|c| c.map(|c| (c.vars.eta1, c.rho)))
                }
                SweepMode::DistributedConvex => {
                    max_eps_distributed_at(&pc, lambda, eta, opts).map(|c| c.map(|c| (c.vars.eta1, c.eps)))
                }
            };
            outcome(cell, Some(eta), convex, r)
        })
        .collect()
}

/// All rows in grid order, computed sequentially.
pub fn run_sweep(cfg: &SweepConfig, opts: &EngineOptions) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    Ok(cfg.cells().iter().flat_map(|c| run_cell(cfg, c, opts)).collect())
}
