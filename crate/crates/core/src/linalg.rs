//! Dense symmetric matrices and the few kernels the engine needs.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Absolute symmetry tolerance for matrices entering the engine.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense real symmetric matrix.
///
/// Construction checks `|a[i][j] - a[j][i]| <= 1e-12 * max(1, |a[i][j]|)` and
/// then stores the exactly symmetrized average.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(dim: usize, row_major: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if row_major.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: row_major.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, row_major))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut flat = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::new(dim, &flat)
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                let diff = (a - b).abs();
                let scale = a.abs().max(b.abs()).max(1.0);
                if !(diff <= SYMMETRY_TOL * scale) {
                    return Err(Error::NotSymmetric { i, j, diff });
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its transpose without checking.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.0[(i, j)] = value;
        self.0[(j, i)] = value;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymMatrix(&self.0 * s)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &SymMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(SymMatrix(&self.0 + &other.0 * s))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    fn check_same_dim(&self, other: &SymMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.0[(i, j)] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute eigenvalue (spectral norm).
    pub fn spectral_norm(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `M ⊗ I_d`.
    pub fn kron_identity(&self, d: usize) -> SymMatrix {
        SymMatrix(self.0.kronecker(&DMatrix::<f64>::identity(d, d)))
    }

    /// Adds `block[a][b]` into `self[idx[a]][idx[b]]`.
    pub(crate) fn accumulate(&mut self, idx: &[usize], block: &SymMatrix) {
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                self.0[(i, j)] += block.0[(a, b)];
            }
        }
    }
}

/// `Xᵀ M X` for a general (possibly rectangular) `X`.
pub(crate) fn congruence(m: &DMatrix<f64>, x: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::symmetrized(x.transpose() * m * x)
}

#[cfg(feature = "serde")]
mod serde_impl {
    use super::SymMatrix;
    use alloc::vec::Vec;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    impl Serialize for SymMatrix {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            self.rows().serialize(s)
        }
    }

    impl<'de> Deserialize<'de> for SymMatrix {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            SymMatrix::from_rows(&rows).map_err(D::Error::custom)
        }
    }
}
