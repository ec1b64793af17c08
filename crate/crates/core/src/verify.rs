//! Bound checks on recorded trajectories, empirical rates and the lemma
//! suites.
//!
//! Every check reports a signed violation `value - bound - slack` per
//! iteration, where the slack is `1e-9 (1 + |bound|)`; the report keeps the
//! maximum, so a non-positive `max_violation` means the bound held everywhere.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::lmi::{CentralizedCertificate, ConvexCentralizedCertificate, ConvexDistributedCertificate, DistributedCertificate};
use crate::network::{block_reduction_check, Graph, NetworkSpec};
use crate::qc::{centralized_matrices, convex_centralized_matrix};
use crate::sim::{
    make_dgf, make_objective, run_centralized, run_distributed, DgfKind, DgfParams, MirrorMap, ObjectiveKind, ObjectiveOracle,
    Topology, TrajectoryRecord,
};
use crate::{Error, ProblemClass, Result, SectorBounds, SymMatrix};

/// Relative part of the bound slack.
pub const BOUND_SLACK: f64 = 1e-9;
/// Default fraction of the usable horizon used for rate fitting.
pub const RATE_WINDOW: f64 = 0.5;
/// Fewest positive values needed for a rate fit.
pub const MIN_RATE_POINTS: usize = 20;
/// Values below `FLOOR * v_0` are treated as converged.
const RATE_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundKind {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    pub kind: BoundKind,
    /// `max_k (value_k - bound_k - slack_k)`; `-inf` for empty trajectories.
    pub max_violation: f64,
    /// Iteration `k` (or horizon `K` for ergodic bounds) of the first violation.
    pub first_violation_k: Option<usize>,
    pub empirical_rate: Option<f64>,
    /// Certified `rho` or `eps`.
    pub certified_value: f64,
    pub seeds: Vec<u64>,
    /// Log-log slope of the bound curve in `K` (ergodic bounds only).
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub bound_exponent: Option<f64>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.first_violation_k.is_none()
    }

    /// Folds another report of the same kind into this one.
    pub fn merge(&mut self, other: &BoundReport) {
        if other.max_violation > self.max_violation {
            self.max_violation = other.max_violation;
        }
        if self.first_violation_k.is_none() {
            self.first_violation_k = other.first_violation_k;
        }
        self.seeds.extend_from_slice(&other.seeds);
    }
}

struct Tally {
    max: f64,
    first: Option<usize>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            max: f64::NEG_INFINITY,
            first: None,
        }
    }

    fn push(&mut self, k: usize, value: f64, bound: f64) {
        let v = value - bound - BOUND_SLACK * (1.0 + bound.abs());
        // NaN counts as a violation.
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.max {
            self.max = v;
        }
        if v > 0.0 && self.first.is_none() {
            self.first = Some(k);
        }
    }

    fn report(self, kind: BoundKind, rate: Option<f64>, certified: f64, exponent: Option<f64>) -> BoundReport {
        BoundReport {
            kind,
            max_violation: self.max,
            first_violation_k: self.first,
            empirical_rate: rate,
            certified_value: certified,
            seeds: Vec::new(),
            bound_exponent: exponent,
        }
    }
}

fn require_topology(traj: &TrajectoryRecord, t: Topology) -> Result<()> {
    if traj.topology != t {
        return Err(Error::MetadataMismatch(alloc::format!(
            "trajectory is {:?}, the certificate is {:?}",
            traj.topology,
            t
        )));
    }
    Ok(())
}

fn require_eta(traj: &TrajectoryRecord, eta: f64) -> Result<()> {
    if (traj.eta - eta).abs() > 1e-12 * (1.0 + eta.abs()) {
        return Err(Error::MetadataMismatch(alloc::format!(
            "trajectory step-size {} differs from certified {}",
            traj.eta,
            eta
        )));
    }
    Ok(())
}

fn require_dgf<M: MirrorMap + ?Sized>(traj: &TrajectoryRecord, dgf: &M) -> Result<()> {
    if dgf.bounds() != traj.phi_bounds {
        return Err(Error::MetadataMismatch("mirror map bounds differ from the trajectory".into()));
    }
    Ok(())
}

fn require_p(traj: &TrajectoryRecord, p: &SymMatrix) -> Result<()> {
    let same = p.dim() == traj.p.dim()
        && (0..p.dim()).all(|i| (0..p.dim()).all(|j| (p.get(i, j) - traj.p.get(i, j)).abs() <= 1e-9 * (1.0 + p.get(i, j).abs())));
    if traj.p_is_default || !same {
        return Err(Error::MetadataMismatch("trajectory was not recorded with the certificate's P".into()));
    }
    Ok(())
}

/// Least-squares slope of `log(bound_K)` against `log K`.
fn loglog_slope(bounds: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = bounds
        .iter()
        .filter(|(_, b)| *b > 0.0 && b.is_finite())
        .map(|(k, b)| (libm::log(*k as f64), libm::log(*b)))
        .collect();
    slope(&pts)
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-step contraction factor fitted to a decaying positive series.
///
/// Uses the prefix before the series first drops to zero, below
/// `1e-20 v_0`, or turns non-finite, then fits `log v_k` on the last `window`
/// fraction of that prefix. Needs at least 20 usable values.
pub fn fit_rate(series: &[f64], window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::param("window", "must lie in (0, 1]"));
    }
    let first = *series.first().ok_or_else(|| Error::param("series", "empty"))?;
    let floor = first * RATE_FLOOR;
    let usable = series.iter().take_while(|v| v.is_finite() && **v > 0.0 && **v > floor).count();
    if usable < MIN_RATE_POINTS {
        return Err(Error::param("series", "fewer than 20 positive values before convergence"));
    }
    let start = usable - libm::ceil(window * usable as f64) as usize;
    let start = start.min(usable - 2);
    let pts: Vec<(f64, f64)> = (start..usable).map(|k| (k as f64, libm::log(series[k]))).collect();
    let s = slope(&pts).ok_or_else(|| Error::Internal("degenerate rate fit".into()))?;
    Ok(libm::exp(s))
}

/// Empirical rate of a trajectory: the Bregman series for centralized runs,
/// the `P`-weighted distance for distributed runs.
pub fn empirical_rate(traj: &TrajectoryRecord) -> Result<f64> {
    match traj.topology {
        Topology::Centralized => fit_rate(&traj.bregman, RATE_WINDOW),
        Topology::Distributed => fit_rate(&traj.pnorm_sq, RATE_WINDOW),
    }
}

/// `D_{φ*}(z_k, z★) ≤ ρ^k D_{φ*}(z_0, z★)` and
/// `‖x_k - x★‖² ≤ 2 D_{φ*}(z_0, z★) ρ^k / μ_φ`.
pub fn check_thm1_bound<M: MirrorMap + ?Sized>(
    traj: &TrajectoryRecord,
    cert: &CentralizedCertificate,
    dgf: &M,
) -> Result<BoundReport> {
    require_topology(traj, Topology::Centralized)?;
    require_eta(traj, cert.eta)?;
    require_dgf(traj, dgf)?;
    let mu_phi = traj.phi_bounds.mu();
    let mut t = Tally::new();
    if let Some(&d0) = traj.bregman.first() {
        let mut pow = 1.0;
        for k in 0..traj.len() {
            t.push(k, traj.bregman[k], pow * d0);
            t.push(k, traj.dist_sq[k], 2.0 * d0 * pow / mu_phi);
            pow *= cert.rho;
        }
    }
    Ok(t.report(BoundKind::Thm1, fit_rate(&traj.bregman, RATE_WINDOW).ok(), cert.rho, None))
}

/// `f(x̄_K) - f★ ≤ D_{φ*}(z_0, z★) / (ε K)` for every recorded `K`.
pub fn check_thm2_bound<M: MirrorMap + ?Sized>(
    traj: &TrajectoryRecord,
    cert: &ConvexCentralizedCertificate,
    dgf: &M,
) -> Result<BoundReport> {
    require_topology(traj, Topology::Centralized)?;
    require_eta(traj, cert.eta)?;
    require_dgf(traj, dgf)?;
    ergodic_report(BoundKind::Thm2, traj, traj.bregman.first().copied(), cert.eps, fit_rate(&traj.bregman, RATE_WINDOW).ok())
}

/// `‖ξ_k - ξ★‖²_{P⊗I} ≤ ρ^k ‖ξ_0 - ξ★‖²_{P⊗I}`.
pub fn check_thm3_bound(traj: &TrajectoryRecord, cert: &DistributedCertificate) -> Result<BoundReport> {
    require_topology(traj, Topology::Distributed)?;
    require_eta(traj, cert.vars.eta1)?;
    require_p(traj, &cert.vars.p)?;
    let mut t = Tally::new();
    if let Some(&v0) = traj.pnorm_sq.first() {
        let mut pow = 1.0;
        for (k, v) in traj.pnorm_sq.iter().enumerate() {
            t.push(k, *v, pow * v0);
            pow *= cert.rho;
        }
    }
    Ok(t.report(BoundKind::Thm3, fit_rate(&traj.pnorm_sq, RATE_WINDOW).ok(), cert.rho, None))
}

/// `Σ_i (f(x̄_i^K) - f★) ≤ V_0 / (ε K)` with `V_0 = ‖ξ_0 - ξ★‖²_{P⊗I}`.
pub fn check_thm4_bound(
    traj: &TrajectoryRecord,
    cert: &ConvexDistributedCertificate,
    obj: &ObjectiveOracle,
) -> Result<BoundReport> {
    require_topology(traj, Topology::Distributed)?;
    require_eta(traj, cert.vars.eta1)?;
    require_p(traj, &cert.vars.p)?;
    if obj.bounds() != traj.f_bounds || obj.n() != traj.n || obj.dim() != traj.d {
        return Err(Error::MetadataMismatch("objective differs from the trajectory".into()));
    }
    ergodic_report(BoundKind::Thm4, traj, traj.pnorm_sq.first().copied(), cert.eps, fit_rate(&traj.pnorm_sq, RATE_WINDOW).ok())
}

fn ergodic_report(kind: BoundKind, traj: &TrajectoryRecord, v0: Option<f64>, eps: f64, rate: Option<f64>) -> Result<BoundReport> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "an ergodic bound needs eps > 0"));
    }
    let mut t = Tally::new();
    let mut curve = Vec::with_capacity(traj.ergodic_gap.len());
    if let Some(v0) = v0 {
        for (i, gap) in traj.ergodic_gap.iter().enumerate() {
            let k = i + 1;
            let bound = v0 / (eps * k as f64);
            curve.push((k, bound));
            t.push(k, *gap, bound);
        }
    }
    Ok(t.report(kind, rate, eps, loglog_slope(&curve)))
}

/// `Σ_{a,b} m_ab ⟨p_a, p_b⟩`: the quadratic form of `M ⊗ I` on stacked blocks.
fn block_quad(m: &SymMatrix, parts: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    for (a, pa) in parts.iter().enumerate() {
        for (b, pb) in parts.iter().enumerate() {
            let w = m.get(a, b);
            if w != 0.0 {
                s += w * pa.iter().zip(pb.iter()).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    s
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn class_of(traj: &TrajectoryRecord) -> Result<ProblemClass> {
    ProblemClass::new(traj.f_bounds, traj.phi_bounds)
}

/// Max of `D_{k+1} - ρ D_k - eᵀ M_sc e` over recorded steps, the scaled form
/// of the Lyapunov decrement inequality for `V_k = ρ^{-k} D_{φ*}(z_k, z★)`.
pub fn lemma2_violation(traj: &TrajectoryRecord, rho: f64) -> Result<f64> {
    require_topology(traj, Topology::Centralized)?;
    let m = centralized_matrices(&class_of(traj)?, rho, traj.eta)?.m_sc;
    let states = traj.states()?;
    let fp = &traj.fixed_point;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..states.len().saturating_sub(1) {
        let s = &states[k];
        let (dz, dx, du) = (diff(&s.z, &fp.z_star), diff(&s.x, &fp.x_star), diff(&s.u, &fp.u_star));
        let rhs = block_quad(&m, &[&dz, &dx, &du]);
        worst = worst.max(traj.bregman[k + 1] - rho * traj.bregman[k] - rhs);
    }
    Ok(worst)
}

/// Max of `ε (f(x_k) - f★) + D_{k+1} - D_k - eᵀ M_c e` over recorded steps.
pub fn lemma3_violation(traj: &TrajectoryRecord, eps: f64) -> Result<f64> {
    require_topology(traj, Topology::Centralized)?;
    let m = convex_centralized_matrix(traj.phi_bounds.mu(), traj.eta, eps)?;
    let states = traj.states()?;
    let fp = &traj.fixed_point;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..states.len().saturating_sub(1) {
        let s = &states[k];
        let (dz, dx, du) = (diff(&s.z, &fp.z_star), diff(&s.x, &fp.x_star), diff(&s.u, &fp.u_star));
        let rhs = block_quad(&m, &[&dz, &dx, &du]);
        worst = worst.max(eps * traj.fgap[k] + traj.bregman[k + 1] - traj.bregman[k] - rhs);
    }
    Ok(worst)
}

/// Max over iterates of `Σ_i (f(x_i) - f★) - L_f Δxᵀ J1 Δx - Δuᵀ J2 Δx`,
/// with `J1`, `J2` the disagreement and consensus projectors.
pub fn lemma4_violation(traj: &TrajectoryRecord) -> Result<f64> {
    require_topology(traj, Topology::Distributed)?;
    let (n, d) = (traj.n, traj.d);
    let l_f = traj.f_bounds.l();
    let fp = &traj.fixed_point;
    let mut worst = f64::NEG_INFINITY;
    for (k, s) in traj.states()?.iter().enumerate() {
        let (dx, du) = (diff(&s.x, &fp.x_star), diff(&s.u, &fp.u_star));
        let mut mx = vec![0.0; d];
        let mut mu = vec![0.0; d];
        for i in 0..n {
            for c in 0..d {
                mx[c] += dx[i * d + c] / n as f64;
                mu[c] += du[i * d + c] / n as f64;
            }
        }
        let mut j1 = 0.0;
        for i in 0..n {
            for c in 0..d {
                let r = dx[i * d + c] - mx[c];
                j1 += r * r;
            }
        }
        let j2: f64 = n as f64 * mx.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>();
        worst = worst.max(traj.fgap[k] - l_f * j1 - j2);
    }
    Ok(worst)
}

/// Max of `|D_{φ*}(z_k, z★) - D_φ(x★, x_k)| / (1 + D_φ(x★, x_k))` along a
/// trajectory, with the conjugate side computed from `φ*` values.
pub fn bregman_identity_gap<M: MirrorMap + ?Sized>(traj: &TrajectoryRecord, dgf: &M) -> Result<f64> {
    require_dgf(traj, dgf)?;
    let z_star = &traj.fixed_point.z_star;
    let mut worst: f64 = 0.0;
    for (s, primal) in traj.states()?.iter().zip(&traj.bregman) {
        let dual = dgf.conj_bregman(&s.z, z_star)?;
        worst = worst.max((dual - primal).abs() / (1.0 + primal.abs()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LemmaSuiteReport {
    pub seed: u64,
    pub trials: usize,
    pub lemma1_agreements: usize,
    pub lemma2_max_violation: f64,
    pub lemma3_max_violation: f64,
    pub lemma4_max_violation: f64,
    pub bregman_identity_max_gap: f64,
}

impl LemmaSuiteReport {
    /// Exact block-reduction agreement and every inequality within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.lemma1_agreements == self.trials
            && self.lemma2_max_violation <= tol
            && self.lemma3_max_violation <= tol
            && self.lemma4_max_violation <= tol
            && self.bregman_identity_max_gap <= tol
    }
}

const SUITE_ITERS: usize = 120;

fn random_dgf(rng: &mut ChaCha8Rng, d: usize) -> Result<crate::sim::DgfOracle> {
    let kind = match rng.gen_range(0..3) {
        0 => DgfKind::Euclidean,
        1 => DgfKind::DiagQuadratic,
        _ => DgfKind::SeparableSmooth,
    };
    let mu = rng.gen_range(0.5..2.0);
    let params = DgfParams {
        bounds: SectorBounds::new(mu, mu * rng.gen_range(1.0..4.0))?,
        alpha: rng.gen_range(0.0..3.0),
        dim: d,
    };
    make_dgf(kind, &params, rng.gen())
}

fn random_objective(rng: &mut ChaCha8Rng, convex: bool, n: usize, d: usize) -> Result<ObjectiveOracle> {
    let kind = if rng.gen::<bool>() {
        ObjectiveKind::Quadratic
    } else {
        ObjectiveKind::LogisticL2
    };
    let mu: f64 = if convex && kind == ObjectiveKind::Quadratic {
        0.0
    } else {
        rng.gen_range(0.2..1.0)
    };
    let l = mu.max(0.2) * rng.gen_range(1.5..6.0);
    make_objective(kind, SectorBounds::new(mu, l)?, n, d, rng.gen())
}

fn random_x0(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_sym(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
    let g = nalgebra::DMatrix::<f64>::from_fn(m, m, |_, _| rng.sample(StandardNormal));
    let shift = rng.gen_range(-0.5..0.5) * m as f64;
    let q = &g * g.transpose() - nalgebra::DMatrix::<f64>::identity(m, m) * shift.max(0.0) * 0.5;
    SymMatrix::from_matrix((&q + q.transpose()) * 0.5).expect("symmetric by construction")
}

/// Runs `trials` seeded instances of each lemma check.
///
/// The block-reduction check compares reduced and full semidefiniteness of
/// random 5×5 blocks. The `lemma2`/`lemma3` checks run centralized
/// trajectories with random mirror maps, objectives, step-sizes, `ρ` and `ε`;
/// `lemma4` runs distributed trajectories over random connected graphs. The Bregman identity gap is
/// collected over all centralized runs.
pub fn lemma_suites(seed: u64, trials: usize) -> Result<LemmaSuiteReport> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = LemmaSuiteReport {
        seed,
        trials,
        lemma1_agreements: 0,
        lemma2_max_violation: f64::NEG_INFINITY,
        lemma3_max_violation: f64::NEG_INFINITY,
        lemma4_max_violation: f64::NEG_INFINITY,
        bregman_identity_max_gap: 0.0,
    };
    for _ in 0..trials {
        let (q1, q2) = (random_sym(&mut rng, 5), random_sym(&mut rng, 5));
        let (n, d) = (rng.gen_range(2..6), rng.gen_range(1..3));
        if block_reduction_check(&q1, &q2, n, d)?.agrees() {
            rep.lemma1_agreements += 1;
        }
    }
    for _ in 0..trials {
        let d = rng.gen_range(2..6);
        let dgf = random_dgf(&mut rng, d)?;
        let obj = random_objective(&mut rng, false, 1, d)?;
        let eta = rng.gen_range(0.05..1.5) * dgf.bounds().mu() / obj.bounds().l();
        let rec = run_centralized(&dgf, &obj, eta, &random_x0(&mut rng, d), SUITE_ITERS)?;
        rep.lemma2_max_violation = rep.lemma2_max_violation.max(lemma2_violation(&rec, rng.gen_range(0.05..1.0))?);
        rep.bregman_identity_max_gap = rep.bregman_identity_max_gap.max(bregman_identity_gap(&rec, &dgf)?);
    }
    for _ in 0..trials {
        let d = rng.gen_range(2..6);
        let dgf = random_dgf(&mut rng, d)?;
        let obj = random_objective(&mut rng, true, 1, d)?;
        let eta = rng.gen_range(0.05..1.5) * dgf.bounds().mu() / obj.bounds().l();
        let rec = run_centralized(&dgf, &obj, eta, &random_x0(&mut rng, d), SUITE_ITERS)?;
        rep.lemma3_max_violation = rep.lemma3_max_violation.max(lemma3_violation(&rec, rng.gen_range(0.0..eta))?);
        rep.bregman_identity_max_gap = rep.bregman_identity_max_gap.max(bregman_identity_gap(&rec, &dgf)?);
    }
    for _ in 0..trials {
        let (n, d) = (rng.gen_range(2..7), rng.gen_range(2..4));
        let graph = Graph::erdos_renyi(n, 0.6, rng.gen())?;
        let net = NetworkSpec::build(&graph, None)?;
        let dgf = random_dgf(&mut rng, d)?;
        let obj = random_objective(&mut rng, true, n, d)?;
        let eta1 = rng.gen_range(0.05..1.0) * dgf.bounds().mu() / obj.bounds().l();
        let rec = run_distributed(&dgf, &obj, &net, eta1, &random_x0(&mut rng, n * d), SUITE_ITERS, None)?;
        rep.lemma4_max_violation = rep.lemma4_max_violation.max(lemma4_violation(&rec)?);
    }
    Ok(rep)
}
