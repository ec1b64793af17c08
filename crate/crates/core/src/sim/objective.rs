//! Seeded objective instances `f = (1/n) Σ f_i` within a sector class.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, SectorBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ObjectiveKind {
    Quadratic,
    LogisticL2,
}

#[derive(Debug, Clone, PartialEq)]
enum Local {
    /// `½ (x - c)ᵀ Q (x - c)`.
    Quadratic { q: DMatrix<f64>, c: DVector<f64> },
    /// `(1/m) Σ log(1 + exp(-b_k a_kᵀx)) + (mu/2)‖x‖²`.
    Logistic { a: DMatrix<f64>, b: Vec<f64>, mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveOracle {
    kind: ObjectiveKind,
    bounds: SectorBounds,
    d: usize,
    locals: Vec<Local>,
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

/// Eigenvalues in `[mu, L]` including both endpoints whenever `d >= 2`.
fn spectrum(rng: &mut ChaCha8Rng, b: &SectorBounds, d: usize) -> Vec<f64> {
    let mut e: Vec<f64> = (0..d).map(|_| rng.gen_range(b.mu()..=b.l())).collect();
    e[0] = b.mu();
    if d > 1 {
        e[d - 1] = b.l();
    } else {
        e[0] = b.l();
    }
    e
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// Builds `n` local objectives in dimension `d`, each in the class `bounds`.
///
/// Quadratic locals use `Q_i = U diag(e) Uᵀ` with a seeded rotation and
/// spectrum touching both bounds (rank deficient when `mu = 0`). Logistic
/// locals draw `2d` labelled samples and scale the features so that the
/// curvature bound `mu + λ_max(AᵀA)/(4m)` equals `L`.
pub fn make_objective(kind: ObjectiveKind, bounds: SectorBounds, n: usize, d: usize, seed: u64) -> Result<ObjectiveOracle> {
    if n == 0 || d == 0 {
        return Err(Error::param("n", "agent count and dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locals = Vec::with_capacity(n);
    for _ in 0..n {
        let local = match kind {
            ObjectiveKind::Quadratic => {
                let u = random_orthogonal(&mut rng, d);
                let e = DVector::from_vec(spectrum(&mut rng, &bounds, d));
                let q = &u * DMatrix::from_diagonal(&e) * u.transpose();
                let q = (&q + q.transpose()) * 0.5;
                let c = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                Local::Quadratic { q, c }
            }
            ObjectiveKind::LogisticL2 => {
                let m = 2 * d;
                let mut a = DMatrix::<f64>::from_fn(m, d, |_, _| rng.sample(StandardNormal));
                let b: Vec<f64> = (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
                let room = bounds.l() - bounds.mu();
                let top = (a.transpose() * &a).symmetric_eigenvalues().max() / (4.0 * m as f64);
                if room > 0.0 && top > 0.0 {
                    a *= libm::sqrt(room / top);
                } else {
                    a.fill(0.0);
                }
                Local::Logistic { a, b, mu: bounds.mu() }
            }
        };
        locals.push(local);
    }
    Ok(ObjectiveOracle { kind, bounds, d, locals })
}

impl ObjectiveOracle {
    /// Quadratic instance with explicit data, one `(Q_i, c_i)` per agent.
    pub fn quadratic(bounds: SectorBounds, parts: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let d = parts.first().map(|p| p.1.len()).ok_or_else(|| Error::param("parts", "need at least one agent"))?;
        for (q, c) in &parts {
            if q.nrows() != d || q.ncols() != d || c.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: q.nrows() });
            }
        }
        let locals = parts.into_iter().map(|(q, c)| Local::Quadratic { q, c }).collect();
        Ok(Self {
            kind: ObjectiveKind::Quadratic,
            bounds,
            d,
            locals,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn bounds(&self) -> SectorBounds {
        self.bounds
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        match &self.locals[i] {
            Local::Quadratic { q, c } => {
                let r = DVector::from_column_slice(x) - c;
                0.5 * r.dot(&(q * &r))
            }
            Local::Logistic { a, b, mu } => {
                let m = b.len() as f64;
                let xv = DVector::from_column_slice(x);
                let margins = a * &xv;
                let loss: f64 = margins.iter().zip(b).map(|(t, y)| softplus(-y * t)).sum();
                loss / m + 0.5 * mu * xv.norm_squared()
            }
        }
    }

    pub fn local_grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        match &self.locals[i] {
            Local::Quadratic { q, c } => {
                let r = DVector::from_column_slice(x) - c;
                (q * r).iter().copied().collect()
            }
            Local::Logistic { a, b, mu } => {
                let m = b.len() as f64;
                let xv = DVector::from_column_slice(x);
                let margins = a * &xv;
                let w = DVector::from_fn(b.len(), |k, _| -b[k] * sigmoid(-b[k] * margins[k]) / m);
                let g = a.transpose() * w + xv * *mu;
                g.iter().copied().collect()
            }
        }
    }

    fn local_hessian(&self, i: usize, x: &[f64]) -> DMatrix<f64> {
        match &self.locals[i] {
            Local::Quadratic { q, .. } => q.clone(),
            Local::Logistic { a, b, mu } => {
                let m = b.len() as f64;
                let xv = DVector::from_column_slice(x);
                let margins = a * &xv;
                let w = DVector::from_fn(b.len(), |k, _| {
                    let s = sigmoid(margins[k]);
                    s * (1.0 - s) / m
                });
                a.transpose() * DMatrix::from_diagonal(&w) * a + DMatrix::identity(self.d, self.d) * *mu
            }
        }
    }

    /// `f(x) = (1/n) Σ f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.local_value(i, x)).sum::<f64>() / self.n() as f64
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for i in 0..self.n() {
            for (a, b) in g.iter_mut().zip(self.local_grad(i, x)) {
                *a += b;
            }
        }
        let n = self.n() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    /// A minimizer of `f`: a linear (pseudo-inverse) solve for quadratics,
    /// damped Newton to `‖∇f‖ <= 1e-12 max(1, ‖∇f(0)‖)` otherwise (relaxed to
    /// `1e-10` when rounding stalls the last digits).
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        match self.kind {
            ObjectiveKind::Quadratic => {
                let mut h = DMatrix::<f64>::zeros(self.d, self.d);
                let mut rhs = DVector::<f64>::zeros(self.d);
                for l in &self.locals {
                    if let Local::Quadratic { q, c } = l {
                        h += q;
                        rhs += q * c;
                    }
                }
                let x = match h.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => {
                        let pinv = h
                            .pseudo_inverse(1e-12 * (1.0 + self.bounds.l() * self.n() as f64))
                            .map_err(|e| Error::NotConverged(format!("pseudo-inverse: {e}")))?;
                        pinv * rhs
                    }
                };
                Ok(x.iter().copied().collect())
            }
            ObjectiveKind::LogisticL2 => self.newton_minimizer(),
        }
    }

    fn newton_minimizer(&self) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.d];
        let n = self.n() as f64;
        let scale = DVector::from_vec(self.grad(&x)).norm().max(1.0);
        for _ in 0..200 {
            let g = DVector::from_vec(self.grad(&x));
            if g.norm() <= 1e-12 * scale {
                return Ok(x);
            }
            let mut h = DMatrix::<f64>::zeros(self.d, self.d);
            for i in 0..self.n() {
                h += self.local_hessian(i, &x);
            }
            h /= n;
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => -&g,
            };
            let f0 = self.value(&x);
            let slope = g.dot(&step);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                // Near the optimum `f` stops resolving progress; accept on
                // gradient decrease instead.
                let gt = DVector::from_vec(self.grad(&trial)).norm();
                if self.value(&trial) <= f0 + 1e-4 * t * slope || gt <= (1.0 - 1e-4 * t) * g.norm() {
                    x = trial;
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    break;
                }
            }
            if t < 1e-12 {
                break;
            }
        }
        let gn = DVector::from_vec(self.grad(&x)).norm();
        if gn <= 1e-10 * scale {
            Ok(x)
        } else {
            Err(Error::NotConverged(format!("minimizer search stalled at gradient norm {gn:e}")))
        }
    }
}
