//! Distance-generating functions (mirror maps) and their Bregman divergences.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, SectorBounds};

/// Newton budget for inverting a separable mirror map.
pub const NEWTON_BUDGET: usize = 100;

/// A strongly convex, smooth mirror map `φ` with its conjugate gradient.
pub trait MirrorMap {
    fn bounds(&self) -> SectorBounds;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    /// `∇φ*(z)`, the inverse of `∇φ`.
    fn conj_grad(&self, z: &[f64]) -> Result<Vec<f64>>;
    /// `D_φ(x, x') = φ(x) - φ(x') - ⟨∇φ(x'), x - x'⟩`.
    fn bregman(&self, x: &[f64], xp: &[f64]) -> f64;

    /// Period of a coordinate-dependent map; stacked vectors repeat it per
    /// agent. `None` when every coordinate is treated alike.
    fn coord_dim(&self) -> Option<usize> {
        None
    }

    /// `φ*(z) = ⟨∇φ*(z), z⟩ - φ(∇φ*(z))`.
    fn conj_value(&self, z: &[f64]) -> Result<f64> {
        let x = self.conj_grad(z)?;
        Ok(x.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - self.value(&x))
    }

    /// `D_{φ*}(z, z') = φ*(z) - φ*(z') - ⟨∇φ*(z'), z - z'⟩`, evaluated from
    /// conjugate values (independently of [`MirrorMap::bregman`]).
    fn conj_bregman(&self, z: &[f64], zp: &[f64]) -> Result<f64> {
        let xp = self.conj_grad(zp)?;
        let lin: f64 = xp.iter().zip(z.iter().zip(zp)).map(|(g, (a, b))| g * (a - b)).sum();
        Ok(self.conj_value(z)? - self.conj_value(zp)? - lin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DgfKind {
    Euclidean,
    DiagQuadratic,
    SeparableSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DgfParams {
    /// Bounds for `diag_quadratic`; ignored by the other kinds.
    pub bounds: SectorBounds,
    /// Curvature weight of `separable_smooth`.
    pub alpha: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Geometry {
    Euclidean,
    Diag(Vec<f64>),
    Separable(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgfOracle {
    kind: DgfKind,
    bounds: SectorBounds,
    geometry: Geometry,
}

/// Builds a mirror map.
///
/// * `euclidean`: `½‖x‖²` (bounds `(1, 1)`).
/// * `diag_quadratic`: `½ xᵀDx` with a seeded diagonal whose smallest and
///   largest entries are exactly `mu` and `L`.
/// * `separable_smooth`: `½‖x‖² + α Σ (√(1 + x_j²) - 1)` (bounds `(1, 1 + α)`).
pub fn make_dgf(kind: DgfKind, params: &DgfParams, seed: u64) -> Result<DgfOracle> {
    match kind {
        DgfKind::Euclidean => Ok(DgfOracle {
            kind,
            bounds: SectorBounds::new(1.0, 1.0)?,
            geometry: Geometry::Euclidean,
        }),
        DgfKind::DiagQuadratic => {
            let b = params.bounds;
            if !(b.mu() > 0.0) {
                return Err(Error::param("mu_phi", "a mirror map must be strongly convex"));
            }
            let d = params.dim;
            if d == 0 {
                return Err(Error::param("dim", "must be positive"));
            }
            if d == 1 && b.mu() != b.l() {
                return Err(Error::param("dim", "one coordinate cannot attain distinct bounds"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut diag: Vec<f64> = (0..d).map(|_| rng.gen_range(b.mu()..=b.l())).collect();
            diag[0] = b.mu();
            if d > 1 {
                diag[1] = b.l();
            }
            diag.shuffle(&mut rng);
            Ok(DgfOracle {
                kind,
                bounds: b,
                geometry: Geometry::Diag(diag),
            })
        }
        DgfKind::SeparableSmooth => {
            let a = params.alpha;
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::param("alpha", "must be finite and nonnegative"));
            }
            Ok(DgfOracle {
                kind,
                bounds: SectorBounds::new(1.0, 1.0 + a)?,
                geometry: Geometry::Separable(a),
            })
        }
    }
}

impl DgfOracle {
    pub fn kind(&self) -> DgfKind {
        self.kind
    }

    /// Diagonal of a `diag_quadratic` map.
    pub fn diagonal(&self) -> Option<&[f64]> {
        match &self.geometry {
            Geometry::Diag(d) => Some(d),
            _ => None,
        }
    }

    /// Coordinate dimension the map is bound to, if any.
    pub fn dim(&self) -> Option<usize> {
        self.diagonal().map(<[f64]>::len)
    }

    fn check_dim(&self, v: &[f64]) {
        if let Some(d) = self.dim() {
            // Agents share the map coordinate-wise: stacked vectors are allowed.
            debug_assert!(v.len().is_multiple_of(d), "vector length {} not a multiple of {d}", v.len());
        }
    }

    fn diag_at(d: &[f64], j: usize) -> f64 {
        d[j % d.len()]
    }
}

fn sep_inverse(alpha: f64, z: f64) -> Result<f64> {
    // Solve h(x) = x + α x / √(1 + x²) = z; h is increasing with h' in [1, 1 + α].
    if z == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if z > 0.0 { (z / (1.0 + alpha), z) } else { (z, z / (1.0 + alpha)) };
    let tol = 1e-12 * z.abs().max(1.0);
    let mut x = z / (1.0 + alpha * 0.5);
    for _ in 0..NEWTON_BUDGET {
        let s = libm::sqrt(1.0 + x * x);
        let r = x + alpha * x / s - z;
        if r.abs() <= tol {
            return Ok(x);
        }
        if r > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let dh = 1.0 + alpha / (s * s * s);
        let next = x - r / dh;
        x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    let s = libm::sqrt(1.0 + x * x);
    if (x + alpha * x / s - z).abs() <= tol {
        Ok(x)
    } else {
        Err(Error::NewtonFailed {
            iterations: NEWTON_BUDGET,
        })
    }
}

/// `√(1+a²) - √(1+b²) - b (a - b) / √(1+b²)` without cancellation.
fn sep_bregman(a: f64, b: f64) -> f64 {
    let (sa, sb) = (libm::sqrt(1.0 + a * a), libm::sqrt(1.0 + b * b));
    let c = 1.0 + a * b;
    let num = if c > 0.0 { (a - b) * (a - b) / (sa * sb + c) } else { sa * sb - c };
    num / sb
}

impl MirrorMap for DgfOracle {
    fn bounds(&self) -> SectorBounds {
        self.bounds
    }

    fn coord_dim(&self) -> Option<usize> {
        self.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.check_dim(x);
        match &self.geometry {
            Geometry::Euclidean => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            Geometry::Diag(d) => {
                0.5 * x.iter().enumerate().map(|(j, v)| Self::diag_at(d, j) * v * v).sum::<f64>()
            }
            Geometry::Separable(a) => x
                .iter()
                .map(|v| 0.5 * v * v + a * (v * v) / (libm::sqrt(1.0 + v * v) + 1.0))
                .sum(),
        }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.check_dim(x);
        match &self.geometry {
            Geometry::Euclidean => x.to_vec(),
            Geometry::Diag(d) => x.iter().enumerate().map(|(j, v)| Self::diag_at(d, j) * v).collect(),
            Geometry::Separable(a) => x.iter().map(|v| v + a * v / libm::sqrt(1.0 + v * v)).collect(),
        }
    }

    fn conj_grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z);
        match &self.geometry {
            Geometry::Euclidean => Ok(z.to_vec()),
            Geometry::Diag(d) => Ok(z.iter().enumerate().map(|(j, v)| v / Self::diag_at(d, j)).collect()),
            Geometry::Separable(a) => z
                .iter()
                .map(|&v| {
                    if v.is_finite() {
                        sep_inverse(*a, v)
                    } else {
                        Err(Error::param("z", format!("non-finite coordinate {v}")))
                    }
                })
                .collect(),
        }
    }

    fn bregman(&self, x: &[f64], xp: &[f64]) -> f64 {
        self.check_dim(x);
        match &self.geometry {
            Geometry::Euclidean => 0.5 * x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            Geometry::Diag(d) => {
                0.5 * x
                    .iter()
                    .zip(xp)
                    .enumerate()
                    .map(|(j, (a, b))| Self::diag_at(d, j) * (a - b) * (a - b))
                    .sum::<f64>()
            }
            Geometry::Separable(al) => x
                .iter()
                .zip(xp)
                .map(|(&a, &b)| 0.5 * (a - b) * (a - b) + al * sep_bregman(a, b))
                .sum(),
        }
    }
}
