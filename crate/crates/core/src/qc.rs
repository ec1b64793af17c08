//! Function-class parameters and the constant quadratic-constraint matrices.
//!
//! All matrices are the scalarized (`d`-independent) forms: the `⊗ I_d`
//! factor is dropped at construction time and simulators re-expand it by
//! working coordinate slice by coordinate slice.

use crate::{Error, Result, SymMatrix};

/// Sector bounds `(mu, L)`: strong convexity and smoothness constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawBounds", into = "RawBounds"))]
pub struct SectorBounds {
    mu: f64,
    l: f64,
}

impl SectorBounds {
    pub fn new(mu: f64, l: f64) -> Result<Self> {
        if !mu.is_finite() || !l.is_finite() {
            return Err(Error::param("bounds", "mu and L must be finite"));
        }
        if !(l > 0.0) {
            return Err(Error::param("L", "must be positive"));
        }
        if !(mu >= 0.0) {
            return Err(Error::param("mu", "must be non-negative"));
        }
        if mu > l {
            return Err(Error::param("mu", "must not exceed L"));
        }
        Ok(SectorBounds { mu, l })
    }

    /// `(1, kappa)`.
    pub fn with_condition(kappa: f64) -> Result<Self> {
        Self::new(1.0, kappa)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// `L / mu`, defined only for `mu > 0`.
    pub fn condition_number(&self) -> Option<f64> {
        (self.mu > 0.0).then(|| self.l / self.mu)
    }

    /// True when every function in `other` also belongs to this class.
    pub fn contains(&self, other: &SectorBounds) -> bool {
        self.mu <= other.mu && other.l <= self.l
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct RawBounds {
    mu: f64,
    #[serde(rename = "L")]
    l: f64,
}

#[cfg(feature = "serde")]
impl TryFrom<RawBounds> for SectorBounds {
    type Error = Error;
    fn try_from(r: RawBounds) -> Result<Self> {
        SectorBounds::new(r.mu, r.l)
    }
}

#[cfg(feature = "serde")]
impl From<SectorBounds> for RawBounds {
    fn from(b: SectorBounds) -> Self {
        RawBounds { mu: b.mu, l: b.l }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    /// `mu_f > 0`: exponential rates.
    #[cfg_attr(feature = "serde", serde(rename = "sc"))]
    StronglyConvex,
    /// `mu_f = 0`: O(1/k) rates.
    Convex,
}

/// Objective class `f` together with the mirror-map class `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProblemClass {
    pub f: SectorBounds,
    pub phi: SectorBounds,
}

impl ProblemClass {
    pub fn new(f: SectorBounds, phi: SectorBounds) -> Result<Self> {
        if !(phi.mu > 0.0) {
            return Err(Error::param("mu_phi", "the mirror map must be strongly convex"));
        }
        Ok(ProblemClass { f, phi })
    }

    /// Builds the class from raw `(mu_f, L_f, mu_phi, L_phi)`.
    pub fn from_params(mu_f: f64, l_f: f64, mu_phi: f64, l_phi: f64) -> Result<Self> {
        Self::new(SectorBounds::new(mu_f, l_f)?, SectorBounds::new(mu_phi, l_phi)?)
    }

    /// `mu_f = mu_phi = 1`, `L_f = kappa_f`, `L_phi = kappa_phi`.
    pub fn from_conditions(kappa_f: f64, kappa_phi: f64) -> Result<Self> {
        Self::from_params(1.0, kappa_f, 1.0, kappa_phi)
    }

    pub fn mode(&self) -> Mode {
        if self.f.mu > 0.0 {
            Mode::StronglyConvex
        } else {
            Mode::Convex
        }
    }

    pub fn require(&self, mode: Mode) -> Result<()> {
        match (mode, self.mode()) {
            (Mode::StronglyConvex, Mode::Convex) => {
                Err(Error::param("mu_f", "strongly convex mode requires mu_f > 0"))
            }
            (Mode::Convex, Mode::StronglyConvex) => {
                Err(Error::param("mu_f", "convex mode requires mu_f = 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn kappa_phi(&self) -> f64 {
        self.phi.l / self.phi.mu
    }
}

/// `[[-mu L/(mu+L), 1/2], [1/2, -1/(mu+L)]]`, the middle matrix of the sector
/// constraint on `(x - y, ∇g(x) - ∇g(y))`.
pub fn sector_qc_kernel(b: &SectorBounds) -> SymMatrix {
    let s = b.mu + b.l;
    let mut k = SymMatrix::zeros(2);
    k.set(0, 0, -b.mu * b.l / s);
    k.set(0, 1, 0.5);
    k.set(1, 1, -1.0 / s);
    k
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", "must lie in (0, 1]"));
    }
    Ok(())
}

pub(crate) fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::param(name, "must be finite and non-negative"));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::param(name, "must be finite and positive"));
    }
    Ok(())
}

/// The three 3×3 matrices of the centralized strongly convex LMI, acting on
/// `(z - z*, x - x*, u - u*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedQc {
    pub m_sc: SymMatrix,
    pub m_f: SymMatrix,
    pub m_phi: SymMatrix,
}

pub fn centralized_matrices(pc: &ProblemClass, rho: f64, eta: f64) -> Result<CentralizedQc> {
    check_rho(rho)?;
    check_nonneg("eta", eta)?;
    let mu_phi = pc.phi.mu;

    let mut m_sc = SymMatrix::zeros(3);
    m_sc.set(0, 0, (1.0 - rho) / (2.0 * mu_phi));
    m_sc.set(1, 2, -eta / 2.0);
    m_sc.set(2, 2, eta * eta / (2.0 * mu_phi));

    let mut m_f = SymMatrix::zeros(3);
    m_f.accumulate(&[1, 2], &sector_qc_kernel(&pc.f));

    // ∇φ* maps z to x with sector [1/L_phi, 1/mu_phi]; written in the (z, x)
    // coordinates the diagonal roles of the kernel swap.
    let s = pc.phi.mu + pc.phi.l;
    let mut m_phi = SymMatrix::zeros(3);
    m_phi.set(0, 0, -1.0 / s);
    m_phi.set(0, 1, 0.5);
    m_phi.set(1, 1, -pc.phi.mu * pc.phi.l / s);

    Ok(CentralizedQc { m_sc, m_f, m_phi })
}

/// `M_c` of the convex centralized LMI.
pub fn convex_centralized_matrix(mu_phi: f64, eta: f64, eps: f64) -> Result<SymMatrix> {
    check_positive("mu_phi", mu_phi)?;
    check_nonneg("eta", eta)?;
    check_nonneg("eps", eps)?;
    let mut m = SymMatrix::zeros(3);
    m.set(1, 2, (eps - eta) / 2.0);
    m.set(2, 2, eta * eta / (2.0 * mu_phi));
    Ok(m)
}

/// The 5×5 constraint matrices of the distributed LMI, acting on
/// `(z, y, x, u, v)` deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedQc {
    pub m_f: SymMatrix,
    pub m_lambda: SymMatrix,
    pub m_phi: SymMatrix,
}

pub fn distributed_matrices(pc: &ProblemClass, lambda: f64) -> Result<DistributedQc> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param("lambda", "must lie in [0, 1]"));
    }
    let mut m_f = SymMatrix::zeros(5);
    m_f.accumulate(&[2, 3], &sector_qc_kernel(&pc.f));

    let mut m_lambda = SymMatrix::zeros(5);
    m_lambda.set(0, 0, lambda * lambda);
    m_lambda.set(4, 4, -1.0);

    let s = pc.phi.mu + pc.phi.l;
    let mut m_phi = SymMatrix::zeros(5);
    m_phi.set(0, 0, -1.0 / s);
    m_phi.set(0, 2, 0.5);
    m_phi.set(2, 2, -pc.phi.mu * pc.phi.l / s);

    Ok(DistributedQc {
        m_f,
        m_lambda,
        m_phi,
    })
}

/// `(M_1, M_2)` of the convex distributed LMI: the function-gap bound split
/// over the disagreement and consensus subspaces.
pub fn convex_distributed_matrices(l_f: f64) -> Result<(SymMatrix, SymMatrix)> {
    check_nonneg("L_f", l_f)?;
    let mut m1 = SymMatrix::zeros(5);
    m1.set(2, 2, l_f);
    let mut m2 = SymMatrix::zeros(5);
    m2.set(2, 3, 0.5);
    Ok((m1, m2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn assert_rows(m: &SymMatrix, expected: &[&[f64]]) {
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_abs_diff_eq!(m.get(i, j), *v, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn bounds_validation() {
        assert!(SectorBounds::new(2.0, 1.0).is_err());
        assert!(SectorBounds::new(0.0, 0.0).is_err());
        assert!(SectorBounds::new(-1.0, 1.0).is_err());
        assert!(SectorBounds::new(1.0, f64::INFINITY).is_err());
        assert_eq!(SectorBounds::new(0.0, 2.0).unwrap().condition_number(), None);
        assert_eq!(SectorBounds::new(1.0, 3.0).unwrap().condition_number(), Some(3.0));
    }

    #[test]
    fn class_requires_strongly_convex_mirror_map() {
        let f = SectorBounds::new(1.0, 2.0).unwrap();
        assert!(ProblemClass::new(f, SectorBounds::new(0.0, 1.0).unwrap()).is_err());
        let pc = ProblemClass::from_params(0.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(pc.mode(), Mode::Convex);
        assert!(pc.require(Mode::StronglyConvex).is_err());
    }

    #[test]
    fn kernel_examples() {
        let k = sector_qc_kernel(&SectorBounds::new(1.0, 1.0).unwrap());
        assert_rows(&k, &[&[-0.5, 0.5], &[0.5, -0.5]]);
        let k = sector_qc_kernel(&SectorBounds::new(0.0, 2.0).unwrap());
        assert_rows(&k, &[&[0.0, 0.5], &[0.5, -0.5]]);
        let k = sector_qc_kernel(&SectorBounds::new(1.0, 3.0).unwrap());
        assert_rows(&k, &[&[-0.75, 0.5], &[0.5, -0.25]]);
    }

    #[test]
    fn centralized_examples() {
        let pc = ProblemClass::from_params(1.0, 3.0, 1.0, 2.0).unwrap();
        let qc = centralized_matrices(&pc, 1.0, 1.0).unwrap();
        assert_rows(&qc.m_sc, &[&[0.0, 0.0, 0.0], &[0.0, 0.0, -0.5], &[0.0, -0.5, 0.5]]);
        assert_rows(&qc.m_f, &[&[0.0, 0.0, 0.0], &[0.0, -0.75, 0.5], &[0.0, 0.5, -0.25]]);
        assert_rows(
            &qc.m_phi,
            &[&[-1.0 / 3.0, 0.5, 0.0], &[0.5, -2.0 / 3.0, 0.0], &[0.0, 0.0, 0.0]],
        );
        let qc = centralized_matrices(&pc, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(qc.m_sc.get(0, 0), 0.25);
        assert!(centralized_matrices(&pc, 0.0, 1.0).is_err());
        assert!(centralized_matrices(&pc, 1.1, 1.0).is_err());
    }

    #[test]
    fn convex_centralized_examples() {
        let m = convex_centralized_matrix(1.0, 1.0, 1.0).unwrap();
        assert_rows(&m, &[&[0.0; 3], &[0.0; 3], &[0.0, 0.0, 0.5]]);
        let m = convex_centralized_matrix(2.0, 1.0, 0.0).unwrap();
        assert_rows(&m, &[&[0.0; 3], &[0.0, 0.0, -0.5], &[0.0, -0.5, 0.25]]);
        let m = convex_centralized_matrix(1.0, 0.0, 0.0).unwrap();
        assert_eq!(m, SymMatrix::zeros(3));
    }

    #[test]
    fn distributed_examples() {
        let pc = ProblemClass::from_params(1.0, 2.0, 1.0, 2.0).unwrap();
        let qc = distributed_matrices(&pc, 0.0).unwrap();
        assert_eq!(qc.m_lambda, SymMatrix::from_diagonal(&[0.0, 0.0, 0.0, 0.0, -1.0]));
        assert_abs_diff_eq!(qc.m_f.get(2, 2), -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qc.m_f.get(2, 3), 0.5);
        assert_abs_diff_eq!(qc.m_f.get(3, 2), 0.5);
        assert_abs_diff_eq!(qc.m_f.get(3, 3), -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qc.m_phi.get(0, 0), -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qc.m_phi.get(0, 2), 0.5);
        assert_abs_diff_eq!(qc.m_phi.get(2, 2), -2.0 / 3.0, epsilon = 1e-15);
        let qc = distributed_matrices(&pc, 0.5).unwrap();
        assert_abs_diff_eq!(qc.m_lambda.get(0, 0), 0.25);
        assert!(distributed_matrices(&pc, 1.5).is_err());
    }

    #[test]
    fn convex_distributed_examples() {
        let (m1, m2) = convex_distributed_matrices(2.0).unwrap();
        assert_eq!(m1.get(2, 2), 2.0);
        assert_eq!(m1.trace(), 2.0);
        assert_eq!(m2.trace(), 0.0);
        assert_eq!((m2.get(2, 3), m2.get(3, 2)), (0.5, 0.5));
        let (m1, _) = convex_distributed_matrices(0.0).unwrap();
        assert_eq!(m1, SymMatrix::zeros(5));
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize, mu: f64, l: f64) -> DMatrix<f64> {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let q = g.qr().q();
        let eig: Vec<f64> = (0..d).map(|_| rng.gen_range(mu..=l)).collect();
        &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose()
    }

    #[test]
    fn sector_constraint_holds_on_sampled_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = f64::INFINITY;
        for trial in 0..1000 {
            let d = 1 + trial % 8;
            let mu = rng.gen_range(0.0..2.0);
            let l = mu + rng.gen_range(0.01..5.0);
            let q = random_spd(&mut rng, d, mu, l);
            let k = sector_qc_kernel(&SectorBounds::new(mu, l).unwrap()).kron_identity(d);
            let x = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
            let y = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
            let dx = &x - &y;
            let du = &q * &dx;
            let e: Vec<f64> = dx.iter().chain(du.iter()).copied().collect();
            worst = worst.min(k.quad_form(&e));
        }
        assert!(worst >= -1e-9, "worst sampled form {worst}");
    }

    #[test]
    fn scalarized_form_equals_kronecker_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pc = ProblemClass::from_params(0.5, 4.0, 1.0, 3.0).unwrap();
        let qc = centralized_matrices(&pc, 0.7, 0.3).unwrap();
        for m in [&qc.m_sc, &qc.m_f, &qc.m_phi] {
            for d in [1usize, 2, 5] {
                let e: Vec<f64> = (0..3 * d).map(|_| rng.sample(StandardNormal)).collect();
                let full = m.kron_identity(d).quad_form(&e);
                // e is stacked block-wise: block k occupies e[k*d..(k+1)*d]
                let sliced: f64 = (0..d)
                    .map(|c| m.quad_form(&[e[c], e[d + c], e[2 * d + c]]))
                    .sum();
                assert!((full - sliced).abs() <= 1e-10 * full.abs().max(1.0));
            }
        }
    }
}
