//! Certificate types and assembly of the certification LMIs.
//!
//! Assembly is by value substitution: every function here takes concrete
//! decision-variable values and returns the numeric matrix. The solver-facing
//! affine form is obtained in [`crate::sdp`] by probing these functions.

use nalgebra::DMatrix;

use crate::linalg::congruence;
use crate::qc::{
    self, centralized_matrices, check_nonneg, check_rho, convex_centralized_matrix,
    convex_distributed_matrices, distributed_matrices,
};
use crate::{Error, Mode, ProblemClass, Result, SymMatrix};

/// Witness for an exponential rate of centralized mirror descent.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CentralizedCertificate {
    pub rho: f64,
    pub eta: f64,
    pub sigma_f: f64,
    pub sigma_phi: f64,
    /// Largest eigenvalue of the assembled LMI at these values.
    pub residual: f64,
    /// Set when `sigma_phi` has no finite value for the class (`kappa_phi = 1`):
    /// the multipliers and residual were evaluated at this surrogate
    /// `kappa_phi` instead.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub limit_surrogate_kappa_phi: Option<f64>,
}

/// Witness for an O(1/k) rate of centralized mirror descent.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvexCentralizedCertificate {
    pub eta: f64,
    pub eps: f64,
    pub sigma_f: f64,
    pub sigma_phi: f64,
    pub residual: f64,
}

/// Decision variables of the distributed LMIs other than the rate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistributedMultipliers {
    pub eta1: f64,
    /// Lyapunov weight on `(z, y)`; positive definite in a certificate.
    pub p: SymMatrix,
    /// Multiplier of the averaging equality constraints; unsigned.
    pub sigma_eq: SymMatrix,
    pub sigma_f: f64,
    pub sigma_phi: f64,
    pub sigma_lambda: f64,
}

impl DistributedMultipliers {
    fn validate(&self) -> Result<()> {
        check_nonneg("eta1", self.eta1)?;
        check_nonneg("sigma_f", self.sigma_f)?;
        check_nonneg("sigma_phi", self.sigma_phi)?;
        check_nonneg("sigma_lambda", self.sigma_lambda)?;
        if self.p.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.p.dim(),
            });
        }
        if self.sigma_eq.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.sigma_eq.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistributedCertificate {
    pub rho: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub vars: DistributedMultipliers,
    /// Largest eigenvalue of the assembled LMI for the disagreement (`i = 1`)
    /// and consensus (`i = 2`) subspaces.
    pub residuals: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvexDistributedCertificate {
    pub eps: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub vars: DistributedMultipliers,
    pub residuals: [f64; 2],
}

/// `M_sc + sigma_f M_f + sigma_phi M_phi`.
pub fn assemble_centralized_sc(
    pc: &ProblemClass,
    rho: f64,
    eta: f64,
    sigma_f: f64,
    sigma_phi: f64,
) -> Result<SymMatrix> {
    check_nonneg("sigma_f", sigma_f)?;
    check_nonneg("sigma_phi", sigma_phi)?;
    let qc = centralized_matrices(pc, rho, eta)?;
    qc.m_sc.add_scaled(sigma_f, &qc.m_f)?.add_scaled(sigma_phi, &qc.m_phi)
}

/// `[[-N, S], [Sᵀ, I]]`, positive semidefinite exactly when `N + S Sᵀ ⪯ 0`.
pub fn schur_lift(n: &SymMatrix, s: &DMatrix<f64>) -> Result<SymMatrix> {
    let k = n.dim();
    if s.nrows() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: s.nrows(),
        });
    }
    let m = s.ncols();
    let mut out = DMatrix::<f64>::zeros(k + m, k + m);
    out.view_mut((0, 0), (k, k)).copy_from(&(-n.as_matrix()));
    out.view_mut((0, k), (k, m)).copy_from(s);
    out.view_mut((k, 0), (m, k)).copy_from(&s.transpose());
    out.view_mut((k, k), (m, m)).fill_with_identity();
    Ok(SymMatrix::symmetrized(out))
}

/// The factor `S` with `S Sᵀ` carrying the step-size-quadratic part of the
/// centralized LMI.
pub fn prop2_factor(mu_phi: f64, eta: f64) -> DMatrix<f64> {
    DMatrix::from_column_slice(
        3,
        1,
        &[0.0, -libm::sqrt(mu_phi / 2.0), eta / libm::sqrt(2.0 * mu_phi)],
    )
}

/// The 4×4 matrix whose positive semidefiniteness is equivalent to the
/// centralized LMI; affine in `(rho, eta, sigma_f, sigma_phi)`.
pub fn assemble_prop2_matrix(
    pc: &ProblemClass,
    rho: f64,
    eta: f64,
    sigma_f: f64,
    sigma_phi: f64,
) -> Result<SymMatrix> {
    pc.require(Mode::StronglyConvex)?;
    check_rho(rho)?;
    check_nonneg("eta", eta)?;
    check_nonneg("sigma_f", sigma_f)?;
    check_nonneg("sigma_phi", sigma_phi)?;
    let (mu_f, l_f) = (pc.f.mu(), pc.f.l());
    let (mu_p, l_p) = (pc.phi.mu(), pc.phi.l());
    let mut m = SymMatrix::zeros(4);
    m.set(0, 0, sigma_phi / (mu_p + l_p) + (rho - 1.0) / (2.0 * mu_p));
    m.set(0, 1, -sigma_phi / 2.0);
    m.set(
        1,
        1,
        mu_p * l_p * sigma_phi / (mu_p + l_p) + mu_p / 2.0 + mu_f * l_f * sigma_f / (mu_f + l_f),
    );
    m.set(1, 2, -sigma_f / 2.0);
    m.set(1, 3, -libm::sqrt(mu_p) / libm::sqrt(2.0));
    m.set(2, 2, sigma_f / (mu_f + l_f));
    m.set(2, 3, eta / libm::sqrt(2.0 * mu_p));
    m.set(3, 3, 1.0);
    Ok(m)
}

/// `M_c + sigma_f M_f + sigma_phi M_phi` for convex objectives.
pub fn assemble_centralized_convex(
    pc: &ProblemClass,
    eta: f64,
    eps: f64,
    sigma_f: f64,
    sigma_phi: f64,
) -> Result<SymMatrix> {
    pc.require(Mode::Convex)?;
    check_nonneg("sigma_f", sigma_f)?;
    check_nonneg("sigma_phi", sigma_phi)?;
    let m_c = convex_centralized_matrix(pc.phi.mu(), eta, eps)?;
    let qc = centralized_matrices(pc, 1.0, eta)?;
    m_c.add_scaled(sigma_f, &qc.m_f)?.add_scaled(sigma_phi, &qc.m_phi)
}

/// State-space blocks of the distributed algorithm restricted to the
/// disagreement (`index 0`) and consensus (`index 1`) subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBlocks {
    pub a: [DMatrix<f64>; 2],
    pub b: [DMatrix<f64>; 2],
    pub h: [DMatrix<f64>; 2],
}

pub fn reduced_state_blocks(eta1: f64) -> Result<ReducedBlocks> {
    check_nonneg("eta1", eta1)?;
    let a1 = DMatrix::from_row_slice(2, 2, &[0.0, -eta1, 1.0, 1.0]);
    let a2 = DMatrix::from_row_slice(2, 2, &[1.0, -eta1, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 3, &[0.0, -eta1, 1.0, 0.0, 0.0, -1.0]);
    let h1 = DMatrix::zeros(2, 5);
    let h2 = DMatrix::from_row_slice(
        2,
        5,
        &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    );
    Ok(ReducedBlocks {
        a: [a1, a2],
        b: [b.clone(), b],
        h: [h1, h2],
    })
}

fn subspace(i: usize) -> Result<usize> {
    match i {
        1 | 2 => Ok(i - 1),
        _ => Err(Error::param("i", "subspace index must be 1 or 2")),
    }
}

/// Lyapunov part `[[AᵀPA - rho P, AᵀPB], [BᵀPA, BᵀPB]]`.
fn lyapunov_block(i: usize, rho: f64, vars: &DistributedMultipliers) -> Result<SymMatrix> {
    let k = subspace(i)?;
    let blocks = reduced_state_blocks(vars.eta1)?;
    let mut ab = DMatrix::<f64>::zeros(2, 5);
    ab.view_mut((0, 0), (2, 2)).copy_from(&blocks.a[k]);
    ab.view_mut((0, 2), (2, 3)).copy_from(&blocks.b[k]);
    let mut out = congruence(vars.p.as_matrix(), &ab).into_matrix();
    let rp = vars.p.as_matrix() * rho;
    let mut top = out.view_mut((0, 0), (2, 2));
    top -= &rp;
    Ok(SymMatrix::symmetrized(out))
}

fn distributed_common(
    i: usize,
    pc: &ProblemClass,
    lambda: f64,
    rho: f64,
    vars: &DistributedMultipliers,
) -> Result<SymMatrix> {
    vars.validate()?;
    let k = subspace(i)?;
    let qc = distributed_matrices(pc, lambda)?;
    let blocks = reduced_state_blocks(vars.eta1)?;
    let eq = congruence(vars.sigma_eq.as_matrix(), &blocks.h[k]);
    lyapunov_block(i, rho, vars)?
        .add_scaled(vars.sigma_f, &qc.m_f)?
        .add_scaled(vars.sigma_lambda, &qc.m_lambda)?
        .add_scaled(vars.sigma_phi, &qc.m_phi)?
        .add_scaled(1.0, &eq)
}

/// Distributed strongly convex LMI for subspace `i ∈ {1, 2}`.
pub fn assemble_distributed_sc(
    i: usize,
    pc: &ProblemClass,
    lambda: f64,
    rho: f64,
    vars: &DistributedMultipliers,
) -> Result<SymMatrix> {
    check_rho(rho)?;
    distributed_common(i, pc, lambda, rho, vars)
}

/// Distributed convex LMI for subspace `i ∈ {1, 2}` (`rho = 1`, plus `eps M_i`).
pub fn assemble_distributed_convex(
    i: usize,
    pc: &ProblemClass,
    lambda: f64,
    eps: f64,
    vars: &DistributedMultipliers,
) -> Result<SymMatrix> {
    pc.require(Mode::Convex)?;
    check_nonneg("eps", eps)?;
    let (m1, m2) = convex_distributed_matrices(pc.f.l())?;
    let m_i = if subspace(i)? == 0 { m1 } else { m2 };
    distributed_common(i, pc, lambda, 1.0, vars)?.add_scaled(eps, &m_i)
}

/// `λ_max` of both distributed strongly convex blocks.
pub fn distributed_sc_residuals(
    pc: &ProblemClass,
    lambda: f64,
    rho: f64,
    vars: &DistributedMultipliers,
) -> Result<[f64; 2]> {
    Ok([
        assemble_distributed_sc(1, pc, lambda, rho, vars)?.max_eigenvalue(),
        assemble_distributed_sc(2, pc, lambda, rho, vars)?.max_eigenvalue(),
    ])
}

pub fn distributed_convex_residuals(
    pc: &ProblemClass,
    lambda: f64,
    eps: f64,
    vars: &DistributedMultipliers,
) -> Result<[f64; 2]> {
    Ok([
        assemble_distributed_convex(1, pc, lambda, eps, vars)?.max_eigenvalue(),
        assemble_distributed_convex(2, pc, lambda, eps, vars)?.max_eigenvalue(),
    ])
}

impl CentralizedCertificate {
    /// Recomputes the residual from the stored variables.
    pub fn recompute_residual(&self, pc: &ProblemClass) -> Result<f64> {
        let pc = match self.limit_surrogate_kappa_phi {
            Some(k) => surrogate_class(pc, k)?,
            None => *pc,
        };
        let rho = if self.limit_surrogate_kappa_phi.is_some() {
            crate::sdp::analytic_rho(&pc)
        } else {
            self.rho
        };
        Ok(assemble_centralized_sc(&pc, rho, self.eta, self.sigma_f, self.sigma_phi)?.max_eigenvalue())
    }
}

impl ConvexCentralizedCertificate {
    pub fn recompute_residual(&self, pc: &ProblemClass) -> Result<f64> {
        Ok(assemble_centralized_convex(pc, self.eta, self.eps, self.sigma_f, self.sigma_phi)?
            .max_eigenvalue())
    }
}

impl DistributedCertificate {
    pub fn recompute_residuals(&self, pc: &ProblemClass, lambda: f64) -> Result<[f64; 2]> {
        distributed_sc_residuals(pc, lambda, self.rho, &self.vars)
    }
}

impl ConvexDistributedCertificate {
    pub fn recompute_residuals(&self, pc: &ProblemClass, lambda: f64) -> Result<[f64; 2]> {
        distributed_convex_residuals(pc, lambda, self.eps, &self.vars)
    }
}

/// The class with `L_phi` replaced so that `kappa_phi` equals `kappa`.
pub(crate) fn surrogate_class(pc: &ProblemClass, kappa: f64) -> Result<ProblemClass> {
    ProblemClass::new(pc.f, qc::SectorBounds::new(pc.phi.mu(), pc.phi.mu() * kappa)?)
}
