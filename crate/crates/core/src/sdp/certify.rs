//! Rate bisection, step-size grids and the closed-form centralized certificate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::solver::{solve_with, AffineMatrixMap, FeasibilityVerdict, SolverOptions, VarSign};
use crate::lmi::{
    assemble_centralized_convex, assemble_centralized_sc, assemble_distributed_convex,
    assemble_distributed_sc, assemble_prop2_matrix, surrogate_class, CentralizedCertificate,
    ConvexCentralizedCertificate, ConvexDistributedCertificate, DistributedCertificate,
    DistributedMultipliers,
};
use crate::{Error, Mode, ProblemClass, Result, SymMatrix};

/// `kappa_phi - 1` used when the analytic multiplier is undefined.
pub const LIMIT_SURROGATE_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EngineOptions {
    /// Strict margin: certificates satisfy `λ_max <= -delta`.
    pub delta: f64,
    /// Lower bound imposed on `λ_min(P)`.
    pub delta_p: f64,
    pub rho_width: f64,
    pub eps_width: f64,
    /// Convex LMIs have no strictly feasible points; they are accepted at
    /// `λ_max <= convex_tolerance` instead of the strict margin.
    pub convex_tolerance: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub box_radius: f64,
    pub budget: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            delta: 1e-9,
            delta_p: 1e-8,
            rho_width: 1e-5,
            eps_width: 1e-6,
            convex_tolerance: 1e-9,
            rho_lo: 1e-6,
            rho_hi: 1.0 - 1e-6,
            box_radius: 1e8,
            budget: 4000,
        }
    }
}

impl EngineOptions {
    fn validate(&self) -> Result<()> {
        let pos = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be positive and finite"))
            }
        };
        pos("delta", self.delta)?;
        pos("delta_p", self.delta_p)?;
        pos("rho_width", self.rho_width)?;
        pos("eps_width", self.eps_width)?;
        pos("box_radius", self.box_radius)?;
        if !(self.convex_tolerance >= 0.0) {
            return Err(Error::param("convex_tolerance", "must be nonnegative"));
        }
        if !(0.0 < self.rho_lo && self.rho_lo < self.rho_hi && self.rho_hi < 1.0) {
            return Err(Error::param("rho_hi", "need 0 < rho_lo < rho_hi < 1"));
        }
        Ok(())
    }

    /// Solver settings for a feasibility check against `threshold`.
    pub fn solver(&self, threshold: f64) -> SolverOptions {
        SolverOptions {
            threshold,
            box_radius: self.box_radius,
            budget: self.budget,
            early_exit: true,
            ..SolverOptions::default()
        }
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::param("grid", "need 0 < lo <= hi and n >= 1"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    Ok((0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                libm::exp(a + (b - a) * k as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

/// Default step-size grid: 64 log-spaced points over `[1e-3, 40 mu_phi / (mu_f + L_f)]`.
pub fn default_eta_grid(pc: &ProblemClass) -> Vec<f64> {
    let hi = 40.0 * pc.phi.mu() / (pc.f.mu() + pc.f.l());
    log_grid(1e-3, hi.max(1e-3), 64).unwrap_or_else(|_| vec![1e-3])
}

/// Closed-form optimal rate `1 - 4 mu_f L_f / ((mu_f + L_f)^2 kappa_phi^2)`.
pub fn analytic_rho(pc: &ProblemClass) -> f64 {
    let (m, l) = (pc.f.mu(), pc.f.l());
    let k = pc.kappa_phi();
    1.0 - 4.0 * m * l / ((m + l) * (m + l) * k * k)
}

/// Closed-form feasible point of the centralized LMI.
///
/// At `kappa_phi = 1` the multiplier `sigma_phi` has no finite value; the
/// limit rate is returned and the multipliers and residual are evaluated at
/// `kappa_phi = 1 + LIMIT_SURROGATE_OFFSET`.
pub fn analytic_certificate(pc: &ProblemClass) -> Result<CentralizedCertificate> {
    pc.require(Mode::StronglyConvex)?;
    let rho = analytic_rho(pc);
    let singular = pc.kappa_phi() - 1.0 < LIMIT_SURROGATE_OFFSET / 2.0;
    let (eval, surrogate) = if singular {
        let k = 1.0 + LIMIT_SURROGATE_OFFSET;
        (surrogate_class(pc, k)?, Some(k))
    } else {
        (*pc, None)
    };
    let (m, l) = (eval.f.mu(), eval.f.l());
    let k = eval.kappa_phi();
    let eta = 2.0 * eval.phi.mu() / (m + l);
    let sigma_phi = 4.0 * m * l / ((m + l) * (m + l)) * (1.0 + k) / (k * (k - 1.0));
    let eval_rho = analytic_rho(&eval);
    let residual = assemble_centralized_sc(&eval, eval_rho, eta, eta, sigma_phi)?.max_eigenvalue();
    Ok(CentralizedCertificate {
        rho,
        eta,
        sigma_f: eta,
        sigma_phi,
        residual,
        limit_surrogate_kappa_phi: surrogate,
    })
}

/// Solves the probed LMI and re-verifies the witness by direct assembly,
/// accepting it only when the worst eigenvalue there is `<= accept`.
fn check<F>(signs: &[VarSign], blocks: F, threshold: f64, accept: f64, opts: &EngineOptions) -> Result<Option<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<SymMatrix>>,
{
    let map = AffineMatrixMap::from_probe(signs.to_vec(), &blocks)?;
    let v: FeasibilityVerdict = solve_with(&map, &opts.solver(threshold))?;
    let feasible = v.is_feasible();
    let Some(y) = v.y.filter(|_| feasible) else {
        return Ok(None);
    };
    let worst = blocks(&y)?
        .iter()
        .map(SymMatrix::max_eigenvalue)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((worst <= accept).then_some(y))
}

/// Box radius tried first in tolerance mode.
const CONVEX_INNER_BOX: f64 = 1e4;

/// Tolerance-mode check. The optimum sits on the boundary of the multiplier
/// cone, and directions the constraint barely sees drift toward the box
/// centre, so a small box is tried before the configured one.
fn check_convex<F>(signs: &[VarSign], blocks: F, opts: &EngineOptions) -> Result<Option<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<SymMatrix>>,
{
    let tol = opts.convex_tolerance;
    if opts.box_radius > CONVEX_INNER_BOX {
        let inner = EngineOptions {
            box_radius: CONVEX_INNER_BOX,
            ..*opts
        };
        if let Some(y) = check(signs, &blocks, tol, tol, &inner)? {
            return Ok(Some(y));
        }
    }
    check(signs, blocks, tol, tol, opts)
}

/// Smallest value in `[lo, hi]` accepted by a monotone oracle, to `width`.
fn bisect_down<W>(
    lo: f64,
    hi: f64,
    width: f64,
    mut at: impl FnMut(f64) -> Result<Option<W>>,
) -> Result<Option<(f64, W)>> {
    let Some(mut witness) = at(hi)? else {
        return Ok(None);
    };
    if let Some(w) = at(lo)? {
        return Ok(Some((lo, w)));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        match at(mid)? {
            Some(w) => {
                hi = mid;
                witness = w;
            }
            None => lo = mid,
        }
    }
    Ok(Some((hi, witness)))
}

/// Largest nonnegative value accepted by a monotone oracle, to `width`.
fn bisect_up<W>(
    start: f64,
    width: f64,
    mut at: impl FnMut(f64) -> Result<Option<W>>,
) -> Result<Option<(f64, W)>> {
    let Some(mut witness) = at(0.0)? else {
        return Ok(None);
    };
    let mut lo = 0.0;
    let mut hi = start.max(width);
    let mut bracketed = false;
    for _ in 0..64 {
        match at(hi)? {
            Some(w) => {
                lo = hi;
                witness = w;
                hi *= 2.0;
            }
            None => {
                bracketed = true;
                break;
            }
        }
    }
    if !bracketed {
        return Err(Error::NotConverged(format!("feasible set unbounded past {lo:e}")));
    }
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        match at(mid)? {
            Some(w) => {
                lo = mid;
                witness = w;
            }
            None => hi = mid,
        }
    }
    Ok(Some((lo, witness)))
}

fn check_centralized(pc: &ProblemClass, rho: f64, eta: Option<f64>, opts: &EngineOptions) -> Result<Option<Vec<f64>>> {
    let strict = (-opts.delta, -opts.delta / 2.0);
    match eta {
        Some(eta) => check(
            &[VarSign::Nonnegative; 2],
            |y: &[f64]| Ok(vec![assemble_centralized_sc(pc, rho, eta, y[0], y[1])?]),
            strict.0,
            strict.1,
            opts,
        ),
        None => check(
            &[VarSign::Nonnegative; 3],
            |y: &[f64]| Ok(vec![assemble_prop2_matrix(pc, rho, y[0], y[1], y[2])?.scaled(-1.0)]),
            strict.0,
            strict.1,
            opts,
        ),
    }
}

/// Smallest certified rate for centralized mirror descent.
///
/// With `eta` fixed the LMI is solved over the two multipliers; with `eta`
/// free the equivalent Schur-lifted form, affine in the step-size, is used.
pub fn min_rho_centralized(
    pc: &ProblemClass,
    eta: Option<f64>,
    opts: &EngineOptions,
) -> Result<CentralizedCertificate> {
    pc.require(Mode::StronglyConvex)?;
    opts.validate()?;
    if let Some(e) = eta {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::param("eta", "must be positive and finite"));
        }
    }
    let found = bisect_down(opts.rho_lo, opts.rho_hi, opts.rho_width, |rho| {
        check_centralized(pc, rho, eta, opts)
    })?;
    let Some((rho, y)) = found else {
        return Err(Error::NoCertificate("no exponential certificate found".into()));
    };
    let (eta, sigma_f, sigma_phi) = match eta {
        Some(e) => (e, y[0], y[1]),
        None => (y[0], y[1], y[2]),
    };
    let residual = assemble_centralized_sc(pc, rho, eta, sigma_f, sigma_phi)?.max_eigenvalue();
    if residual > -opts.delta / 2.0 {
        return Err(Error::Internal(format!(
            "centralized certificate residual {residual:e} exceeds -delta/2"
        )));
    }
    Ok(CentralizedCertificate {
        rho,
        eta,
        sigma_f,
        sigma_phi,
        residual,
        limit_surrogate_kappa_phi: None,
    })
}

/// Largest certified `eps` at a fixed step-size, or `None` when only `eps = 0` (or nothing) is certified.
pub fn max_eps_centralized_at(
    pc: &ProblemClass,
    eta: f64,
    opts: &EngineOptions,
) -> Result<Option<ConvexCentralizedCertificate>> {
    pc.require(Mode::Convex)?;
    opts.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive and finite"));
    }
    let found = bisect_up(eta, opts.eps_width, |eps| {
        check_convex(
            &[VarSign::Nonnegative; 2],
            |y: &[f64]| Ok(vec![assemble_centralized_convex(pc, eta, eps, y[0], y[1])?]),
            opts,
        )
    })?;
    let Some((eps, y)) = found else {
        return Ok(None);
    };
    if !(eps > 0.0) {
        return Ok(None);
    }
    let residual = assemble_centralized_convex(pc, eta, eps, y[0], y[1])?.max_eigenvalue();
    Ok(Some(ConvexCentralizedCertificate {
        eta,
        eps,
        sigma_f: y[0],
        sigma_phi: y[1],
        residual,
    }))
}

pub fn max_eps_centralized_profile(
    pc: &ProblemClass,
    eta_grid: &[f64],
    opts: &EngineOptions,
) -> Result<Vec<Option<ConvexCentralizedCertificate>>> {
    eta_grid.iter().map(|&e| max_eps_centralized_at(pc, e, opts)).collect()
}

/// Grid-best `eps` certificate for centralized mirror descent on convex objectives.
pub fn max_eps_centralized(
    pc: &ProblemClass,
    eta_grid: &[f64],
    opts: &EngineOptions,
) -> Result<ConvexCentralizedCertificate> {
    nonempty(eta_grid)?;
    best_by(max_eps_centralized_profile(pc, eta_grid, opts)?, |c| c.eps, true)
        .ok_or_else(|| Error::NoCertificate("no step-size in the grid certifies eps > 0".into()))
}

fn nonempty(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("grid", "must be nonempty"));
    }
    if grid.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::param("grid", "entries must be finite and nonnegative"));
    }
    Ok(())
}

/// First best entry; ties keep the earliest grid index.
fn best_by<T>(items: Vec<Option<T>>, key: impl Fn(&T) -> f64, maximize: bool) -> Option<T> {
    let mut best: Option<T> = None;
    for item in items.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some(b) => {
                if maximize {
                    key(&item) > key(b)
                } else {
                    key(&item) < key(b)
                }
            }
        };
        if better {
            best = Some(item);
        }
    }
    best
}

const DIST_SIGNS: [VarSign; 8] = [
    VarSign::Free,
    VarSign::Free,
    VarSign::Free,
    VarSign::Free,
    VarSign::Free,
    VarSign::Nonnegative,
    VarSign::Nonnegative,
    VarSign::Nonnegative,
];

/// Unpacks `(p, q, s11, s12, s22, sigma_f, sigma_phi, sigma_lambda)` with
/// `P = [[p, q], [q, 1 - p]]` (unit trace).
fn unpack(eta1: f64, y: &[f64]) -> Result<DistributedMultipliers> {
    Ok(DistributedMultipliers {
        eta1,
        p: SymMatrix::new(2, &[y[0], y[1], y[1], 1.0 - y[0]])?,
        sigma_eq: SymMatrix::new(2, &[y[2], y[3], y[3], y[4]])?,
        sigma_f: y[5],
        sigma_phi: y[6],
        sigma_lambda: y[7],
    })
}

fn p_block(vars: &DistributedMultipliers, delta_p: f64) -> Result<SymMatrix> {
    SymMatrix::identity(2).scaled(delta_p).sub(&vars.p)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::param("lambda", "must lie in [0, 1)"));
    }
    Ok(())
}

/// Smallest certified rate of the distributed algorithm at a fixed `eta1`.
pub fn min_rho_distributed_at(
    pc: &ProblemClass,
    lambda: f64,
    eta1: f64,
    opts: &EngineOptions,
) -> Result<Option<DistributedCertificate>> {
    pc.require(Mode::StronglyConvex)?;
    opts.validate()?;
    check_lambda(lambda)?;
    if !(eta1 >= 0.0 && eta1.is_finite()) {
        return Err(Error::param("eta1", "must be finite and nonnegative"));
    }
    let found = bisect_down(opts.rho_lo, opts.rho_hi, opts.rho_width, |rho| {
        let blocks = |y: &[f64]| {
            let v = unpack(eta1, y)?;
            Ok(vec![
                assemble_distributed_sc(1, pc, lambda, rho, &v)?,
                assemble_distributed_sc(2, pc, lambda, rho, &v)?,
                p_block(&v, opts.delta_p)?,
            ])
        };
        check(&DIST_SIGNS, blocks, -opts.delta, -opts.delta / 2.0, opts)
    })?;
    let Some((rho, y)) = found else {
        return Ok(None);
    };
    let vars = unpack(eta1, &y)?;
    let cert = DistributedCertificate {
        rho,
        residuals: crate::lmi::distributed_sc_residuals(pc, lambda, rho, &vars)?,
        vars,
    };
    // Monotonicity in the rate: the same variables must also pass at rho = 1.
    let at_one = crate::lmi::distributed_sc_residuals(pc, lambda, 1.0, &cert.vars)?;
    for i in 0..2 {
        if at_one[i] > cert.residuals[i] + 1e-12 * (1.0 + cert.residuals[i].abs()) {
            return Err(Error::Internal(format!(
                "rate monotonicity violated in block {}: {:e} at rho = 1 vs {:e}",
                i + 1,
                at_one[i],
                cert.residuals[i]
            )));
        }
    }
    sound(&cert.residuals, &cert.vars, opts, -opts.delta / 2.0)?;
    Ok(Some(cert))
}

fn sound(residuals: &[f64; 2], vars: &DistributedMultipliers, opts: &EngineOptions, limit: f64) -> Result<()> {
    let worst = residuals[0].max(residuals[1]);
    if worst > limit {
        return Err(Error::Internal(format!("distributed residual {worst:e} exceeds {limit:e}")));
    }
    let pmin = vars.p.min_eigenvalue();
    if pmin < opts.delta_p / 2.0 {
        return Err(Error::Internal(format!("P has eigenvalue {pmin:e} below the margin")));
    }
    Ok(())
}

pub fn min_rho_distributed_profile(
    pc: &ProblemClass,
    lambda: f64,
    eta1_grid: &[f64],
    opts: &EngineOptions,
) -> Result<Vec<Option<DistributedCertificate>>> {
    nonempty(eta1_grid)?;
    eta1_grid
        .iter()
        .map(|&e| min_rho_distributed_at(pc, lambda, e, opts))
        .collect()
}

/// Grid-best exponential certificate of the distributed algorithm.
pub fn min_rho_distributed(
    pc: &ProblemClass,
    lambda: f64,
    eta1_grid: &[f64],
    opts: &EngineOptions,
) -> Result<DistributedCertificate> {
    best_by(min_rho_distributed_profile(pc, lambda, eta1_grid, opts)?, |c| c.rho, false)
        .ok_or_else(|| no_cert_for_lambda(lambda))
}

fn no_cert_for_lambda(lambda: f64) -> Error {
    let msg: String = format!("no exponential certificate found for lambda = {lambda}");
    Error::NoCertificate(msg)
}

/// Largest certified `eps` of the distributed algorithm at a fixed `eta1`.
pub fn max_eps_distributed_at(
    pc: &ProblemClass,
    lambda: f64,
    eta1: f64,
    opts: &EngineOptions,
) -> Result<Option<ConvexDistributedCertificate>> {
    pc.require(Mode::Convex)?;
    opts.validate()?;
    check_lambda(lambda)?;
    if !(eta1 >= 0.0 && eta1.is_finite()) {
        return Err(Error::param("eta1", "must be finite and nonnegative"));
    }
    let found = bisect_up(eta1.max(1e-3), opts.eps_width, |eps| {
        let blocks = |y: &[f64]| {
            let v = unpack(eta1, y)?;
            Ok(vec![
                assemble_distributed_convex(1, pc, lambda, eps, &v)?,
                assemble_distributed_convex(2, pc, lambda, eps, &v)?,
                p_block(&v, opts.delta_p)?,
            ])
        };
        check_convex(&DIST_SIGNS, blocks, opts)
    })?;
    let Some((eps, y)) = found else {
        return Ok(None);
    };
    if !(eps > 0.0) {
        return Ok(None);
    }
    let vars = unpack(eta1, &y)?;
    let cert = ConvexDistributedCertificate {
        eps,
        residuals: crate::lmi::distributed_convex_residuals(pc, lambda, eps, &vars)?,
        vars,
    };
    sound(&cert.residuals, &cert.vars, opts, opts.convex_tolerance)?;
    Ok(Some(cert))
}

pub fn max_eps_distributed_profile(
    pc: &ProblemClass,
    lambda: f64,
    eta1_grid: &[f64],
    opts: &EngineOptions,
) -> Result<Vec<Option<ConvexDistributedCertificate>>> {
    nonempty(eta1_grid)?;
    eta1_grid
        .iter()
        .map(|&e| max_eps_distributed_at(pc, lambda, e, opts))
        .collect()
}

pub fn max_eps_distributed(
    pc: &ProblemClass,
    lambda: f64,
    eta1_grid: &[f64],
    opts: &EngineOptions,
) -> Result<ConvexDistributedCertificate> {
    best_by(max_eps_distributed_profile(pc, lambda, eta1_grid, opts)?, |c| c.eps, true)
        .ok_or_else(|| Error::NoCertificate(format!("no step-size certifies eps > 0 for lambda = {lambda}")))
}
