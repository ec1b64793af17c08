//! Eigenvalue-minimization feasibility oracle for block-affine LMIs.
//!
//! Solves `min t` over `(t, y)` subject to `A_b(y) ⪯ t I` for every block,
//! the per-variable sign constraints, and a box `|y_j| <= R`, with a primal
//! log-barrier path-following method. The box keeps the problem bounded; it
//! is part of the contract (an "infeasible" verdict is relative to it).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum VarSign {
    Free,
    Nonnegative,
}

/// One block `F0 + Σ_j y_j F_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlock {
    pub f0: SymMatrix,
    pub fj: Vec<SymMatrix>,
}

impl AffineBlock {
    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.f0.as_matrix().clone();
        for (f, &v) in self.fj.iter().zip(y) {
            if v != 0.0 {
                m += f.as_matrix() * v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixMap {
    blocks: Vec<AffineBlock>,
    signs: Vec<VarSign>,
}

impl AffineMatrixMap {
    pub fn new(signs: Vec<VarSign>, blocks: Vec<AffineBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::param("blocks", "at least one block required"));
        }
        for b in &blocks {
            if b.fj.len() != signs.len() {
                return Err(Error::DimensionMismatch {
                    expected: signs.len(),
                    found: b.fj.len(),
                });
            }
            for f in &b.fj {
                if f.dim() != b.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: b.dim(),
                        found: f.dim(),
                    });
                }
            }
        }
        Ok(Self { blocks, signs })
    }

    /// Recovers the affine form of `f` by evaluating it at `0` and at the unit
    /// vectors, then checks the reconstruction at an interior point.
    pub fn from_probe<F>(signs: Vec<VarSign>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Vec<SymMatrix>>,
    {
        let n = signs.len();
        let mut y = vec![0.0; n];
        let base = f(&y)?;
        let mut fj: Vec<Vec<SymMatrix>> = base.iter().map(|_| Vec::with_capacity(n)).collect();
        for j in 0..n {
            y[j] = 1.0;
            let at = f(&y)?;
            y[j] = 0.0;
            if at.len() != base.len() {
                return Err(Error::DimensionMismatch {
                    expected: base.len(),
                    found: at.len(),
                });
            }
            for (b, (m, m0)) in at.iter().zip(&base).enumerate() {
                fj[b].push(m.sub(m0)?);
            }
        }
        let blocks = base
            .into_iter()
            .zip(fj)
            .map(|(f0, fj)| AffineBlock { f0, fj })
            .collect();
        let map = Self::new(signs, blocks)?;

        let probe: Vec<f64> = (0..n).map(|j| 0.5 + 0.25 * j as f64).collect();
        let direct = f(&probe)?;
        for (b, m) in direct.iter().enumerate() {
            let rebuilt = map.blocks[b].eval(&probe);
            let err = (m.as_matrix() - &rebuilt).amax();
            let scale = 1.0 + m.as_matrix().amax();
            if err > 1e-9 * scale {
                return Err(Error::Internal(format!(
                    "probed map is not affine (block {b}, error {err:e})"
                )));
            }
        }
        Ok(map)
    }

    pub fn var_count(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[VarSign] {
        &self.signs
    }

    pub fn blocks(&self) -> &[AffineBlock] {
        &self.blocks
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<SymMatrix>> {
        self.check_len(y)?;
        Ok(self
            .blocks
            .iter()
            .map(|b| SymMatrix::symmetrized(b.eval(y)))
            .collect())
    }

    /// Worst-block largest eigenvalue at `y`.
    pub fn max_eigenvalue(&self, y: &[f64]) -> Result<f64> {
        Ok(self
            .evaluate(y)?
            .iter()
            .map(SymMatrix::max_eigenvalue)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.var_count() {
            return Err(Error::DimensionMismatch {
                expected: self.var_count(),
                found: y.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub status: FeasibilityStatus,
    /// Best point found; populated whenever the status is `Feasible`.
    pub y: Option<Vec<f64>>,
    /// Worst-block `λ_max` recomputed at the best point.
    pub margin: f64,
    /// Certified lower bound on the optimal `t`.
    pub lower_bound: f64,
    pub iterations: usize,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Feasible iff the recomputed margin is `<= threshold`.
    pub threshold: f64,
    /// Box radius `R` on every variable.
    pub box_radius: f64,
    /// Cap on total Newton steps.
    pub budget: usize,
    /// Stop as soon as a point meets the threshold instead of minimizing `t`.
    pub early_exit: bool,
    /// Barrier parameter growth per outer step.
    pub growth: f64,
    /// Smallest duality gap attempted before reporting `Indeterminate`.
    pub gap_floor: f64,
    /// Relative gap at which the minimal `t` is considered found.
    pub rel_gap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            threshold: -1e-9,
            box_radius: 1e8,
            budget: 4000,
            early_exit: false,
            growth: 8.0,
            gap_floor: 1e-14,
            rel_gap: 1e-7,
        }
    }
}

/// Minimizes the worst-block eigenvalue and declares feasibility iff it is at
/// most `-delta`.
pub fn solve_feasibility(map: &AffineMatrixMap, delta: f64, budget: usize) -> Result<FeasibilityVerdict> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", "must be positive"));
    }
    solve_with(
        map,
        &SolverOptions {
            threshold: -delta,
            budget,
            ..SolverOptions::default()
        },
    )
}

struct Barrier<'a> {
    map: &'a AffineMatrixMap,
    r: f64,
    /// Total barrier degree (sum of block dimensions plus scalar barriers).
    degree: f64,
}

struct Derivs {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> Barrier<'a> {
    fn new(map: &'a AffineMatrixMap, r: f64) -> Self {
        // Every variable carries two scalar barriers (box above, box or sign below).
        let scalar = 2 * map.signs.len();
        let blocks: usize = map.blocks.iter().map(AffineBlock::dim).sum();
        Self {
            map,
            r,
            degree: (scalar + blocks) as f64,
        }
    }

    /// Slack factorizations of `t I - A_b(y)`, or `None` outside the domain.
    fn slacks(&self, x: &[f64]) -> Option<Vec<Cholesky<f64, Dyn>>> {
        let (t, y) = (x[0], &x[1..]);
        for (j, &v) in y.iter().enumerate() {
            if !(v < self.r) {
                return None;
            }
            let lower_ok = match self.map.signs[j] {
                VarSign::Free => v > -self.r,
                VarSign::Nonnegative => v > 0.0,
            };
            if !lower_ok {
                return None;
            }
        }
        let mut out = Vec::with_capacity(self.map.blocks.len());
        for b in &self.map.blocks {
            let mut s = -b.eval(y);
            for i in 0..b.dim() {
                s[(i, i)] += t;
            }
            out.push(Cholesky::new(s)?);
        }
        Some(out)
    }

    fn derivs(&self, x: &[f64], tau: f64, chol: &[Cholesky<f64, Dyn>]) -> Derivs {
        let n = x.len();
        let mut grad = DVector::<f64>::zeros(n);
        let mut hess = DMatrix::<f64>::zeros(n, n);
        grad[0] = tau;
        for (b, ch) in self.map.blocks.iter().zip(chol) {
            let l = ch.l();
            let dim = b.dim();
            // G_a = L⁻¹ D_a L⁻ᵀ with D_t = I and D_j = -F_j.
            let mut gs: Vec<DMatrix<f64>> = Vec::with_capacity(n);
            gs.push(whiten(&l, &DMatrix::identity(dim, dim)));
            for f in &b.fj {
                gs.push(-whiten(&l, f.as_matrix()));
            }
            for a in 0..n {
                grad[a] -= gs[a].trace();
                for c in a..n {
                    let h = gs[a].dot(&gs[c]);
                    hess[(a, c)] += h;
                    if c != a {
                        hess[(c, a)] += h;
                    }
                }
            }
        }
        for (j, &v) in x[1..].iter().enumerate() {
            let k = j + 1;
            let up = self.r - v;
            let low = match self.map.signs[j] {
                VarSign::Free => self.r + v,
                VarSign::Nonnegative => v,
            };
            grad[k] += 1.0 / up - 1.0 / low;
            hess[(k, k)] += 1.0 / (up * up) + 1.0 / (low * low);
        }
        Derivs { grad, hess }
    }
}

fn whiten(l: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let left = l
        .solve_lower_triangular(d)
        .unwrap_or_else(|| DMatrix::from_element(d.nrows(), d.ncols(), f64::NAN));
    let both = l
        .solve_lower_triangular(&left.transpose())
        .unwrap_or_else(|| DMatrix::from_element(d.nrows(), d.ncols(), f64::NAN));
    both.transpose()
}

fn newton_direction(d: &Derivs) -> Option<DVector<f64>> {
    let n = d.grad.len();
    // Symmetric Jacobi scaling keeps badly scaled variables (multipliers near
    // the box next to ones near zero) from swamping the factorization.
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let h = d.hess[(i, i)];
            if h > 0.0 && h.is_finite() {
                1.0 / libm::sqrt(h)
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| d.hess[(i, j)] * w[i] * w[j]);
    let rhs = DVector::from_fn(n, |i, _| -d.grad[i] * w[i]);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut h = scaled.clone();
        for i in 0..n {
            h[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(h) {
            let step = ch.solve(&rhs);
            let step = DVector::from_fn(n, |i, _| step[i] * w[i]);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        jitter = if jitter == 0.0 { 1e-14 } else { jitter * 100.0 };
    }
    None
}

fn initial_point(map: &AffineMatrixMap, r: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(map.var_count() + 1);
    x.push(0.0);
    for s in &map.signs {
        x.push(match s {
            VarSign::Free => 0.0,
            VarSign::Nonnegative => 1.0f64.min(r / 2.0),
        });
    }
    let worst = map.max_eigenvalue(&x[1..]).unwrap_or(0.0);
    x[0] = worst + 1.0 + worst.abs() * 0.1;
    x
}

/// Runs the path-following method with explicit options.
pub fn solve_with(map: &AffineMatrixMap, opts: &SolverOptions) -> Result<FeasibilityVerdict> {
    if !(opts.box_radius > 0.0) || !opts.box_radius.is_finite() {
        return Err(Error::param("box_radius", "must be positive and finite"));
    }
    if !(opts.growth > 1.0) {
        return Err(Error::param("growth", "must exceed 1"));
    }
    let barrier = Barrier::new(map, opts.box_radius);
    let mut x = initial_point(map, opts.box_radius);
    let mut best_y = x[1..].to_vec();
    let mut best = map.max_eigenvalue(&best_y)?;
    let mut tau = barrier.degree / (1.0 + x[0].abs());
    let mut iterations = 0usize;
    let mut lower_bound = f64::NEG_INFINITY;

    let verdict = |status, y: Option<Vec<f64>>, margin, lower_bound, iterations| FeasibilityVerdict {
        status,
        y,
        margin,
        lower_bound,
        iterations,
    };

    loop {
        // Centering by damped Newton.
        let mut centered = false;
        let mut stalled = false;
        while iterations < opts.budget {
            let Some(chol) = barrier.slacks(&x) else {
                return Err(Error::Internal("barrier iterate left the domain".into()));
            };
            let d = barrier.derivs(&x, tau, &chol);
            let Some(step) = newton_direction(&d) else {
                stalled = true;
                break;
            };
            let dec2 = -d.grad.dot(&step);
            if !dec2.is_finite() {
                stalled = true;
                break;
            }
            if dec2 <= 1e-10 {
                centered = true;
                break;
            }
            iterations += 1;
            let dec = libm::sqrt(dec2.max(0.0));
            let mut s = if dec > 0.25 { 1.0 / (1.0 + dec) } else { 1.0 };
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + s * b).collect();
                if barrier.slacks(&trial).is_some() {
                    moved = trial != x;
                    x = trial;
                    break;
                }
                s *= 0.5;
            }
            if !moved {
                stalled = true;
                break;
            }
            let m = map.max_eigenvalue(&x[1..])?;
            if m < best {
                best = m;
                best_y = x[1..].to_vec();
            }
            if opts.early_exit && best <= opts.threshold {
                return Ok(verdict(FeasibilityStatus::Feasible, Some(best_y), best, lower_bound, iterations));
            }
        }

        let gap = barrier.degree / tau;
        if centered {
            lower_bound = lower_bound.max(x[0] - 1.5 * gap);
        }
        let converged = gap <= opts.rel_gap * (1.0 + best.abs());
        if best <= opts.threshold && (opts.early_exit || converged) {
            return Ok(verdict(FeasibilityStatus::Feasible, Some(best_y), best, lower_bound, iterations));
        }
        if lower_bound > opts.threshold {
            return Ok(verdict(FeasibilityStatus::Infeasible, None, best, lower_bound, iterations));
        }
        if stalled || iterations >= opts.budget || gap <= opts.gap_floor {
            let status = if best <= opts.threshold {
                FeasibilityStatus::Feasible
            } else {
                FeasibilityStatus::Indeterminate
            };
            let y = (status == FeasibilityStatus::Feasible).then_some(best_y);
            return Ok(verdict(status, y, best, lower_bound, iterations));
        }
        tau *= opts.growth;
    }
}
