//! The common latent subspace, its orthonormal complement, the associated
//! projectors, and the Schur-complement uniqueness certificates for the two
//! constrained estimation problems.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};

/// Numerical rank threshold relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-10;
/// A certificate is positive definite when its smallest eigenvalue exceeds this.
pub const CERTIFICATE_TOL: f64 = 1e-10;

/// `Θ`, an orthonormal basis `Θ⊥` of its complement, `P_Θ`, `P_Θ⊥` and
/// `S_Θ = ΘΘ* + Θ⊥Θ⊥*`.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    theta: CMat,
    theta_perp: CMat,
    p_theta: CMat,
    p_theta_perp: CMat,
    s_theta: CMat,
}

impl SubspacePair {
    /// Builds the pair from a full-column-rank `Θ` (L×M, `0 < M ≤ L`).
    pub fn from_theta(theta: CMat) -> Result<Self> {
        let theta_perp = orthonormal_complement(&theta)?;
        Ok(Self::assemble(theta, theta_perp))
    }

    /// Builds the pair from `Θ` and a caller-supplied complement, which must
    /// have orthonormal columns orthogonal to `Θ`.
    pub fn from_basis(theta: CMat, theta_perp: CMat) -> Result<Self> {
        let l = theta.nrows();
        if theta_perp.nrows() != l || theta.ncols() + theta_perp.ncols() != l {
            return Err(Error::DimensionMismatch(format!(
                "Θ is {:?} and Θ⊥ is {:?}; need L×M and L×(L−M)",
                theta.shape(),
                theta_perp.shape()
            )));
        }
        orthonormal_complement(&theta)?;
        let gram = theta_perp.adjoint() * &theta_perp;
        let ortho = linalg::max_abs(&(gram - linalg::identity(theta_perp.ncols())));
        let cross = linalg::max_abs(&(theta.adjoint() * &theta_perp));
        if ortho > 1e-10 || cross > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "Θ⊥ must be orthonormal and orthogonal to Θ (residuals {ortho:e}, {cross:e})"
            )));
        }
        Ok(Self::assemble(theta, theta_perp))
    }

    /// The degenerate pair with `M = 0`: no common component, `P_Θ⊥ = I`.
    pub fn empty(dim: usize) -> Self {
        Self::assemble(CMat::zeros(dim, 0), linalg::identity(dim))
    }

    fn assemble(theta: CMat, theta_perp: CMat) -> Self {
        let l = theta.nrows();
        let p_theta = if theta.ncols() == 0 {
            CMat::zeros(l, l)
        } else {
            let gram_inv = linalg::hpd_inverse(&(theta.adjoint() * &theta))
                .expect("full column rank was checked");
            linalg::hermitian_part(&(&theta * gram_inv * theta.adjoint()))
        };
        let p_theta_perp = linalg::identity(l) - &p_theta;
        let s_theta = linalg::hermitian_part(
            &(&theta * theta.adjoint() + &theta_perp * theta_perp.adjoint()),
        );
        Self { theta, theta_perp, p_theta, p_theta_perp, s_theta }
    }

    /// Ambient dimension L.
    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    /// Subspace dimension M.
    pub fn rank(&self) -> usize {
        self.theta.ncols()
    }

    pub fn theta(&self) -> &CMat {
        &self.theta
    }

    pub fn theta_perp(&self) -> &CMat {
        &self.theta_perp
    }

    pub fn p_theta(&self) -> &CMat {
        &self.p_theta
    }

    pub fn p_theta_perp(&self) -> &CMat {
        &self.p_theta_perp
    }

    pub fn s_theta(&self) -> &CMat {
        &self.s_theta
    }

    /// True when `{Θ, Θ⊥}` is an orthonormal basis, i.e. `S_Θ = I`.
    pub fn is_orthonormal(&self) -> bool {
        linalg::max_abs(&(&self.s_theta - linalg::identity(self.dim()))) < 1e-12
    }

    /// Latent coordinates `(Θ*Θ)^{-1}Θ* w`.
    pub fn latent_coordinates(&self, w: &linalg::CVec) -> linalg::CVec {
        if self.rank() == 0 {
            return linalg::CVec::zeros(0);
        }
        let gram_inv = linalg::hpd_inverse(&(self.theta.adjoint() * &self.theta))
            .expect("full column rank was checked");
        gram_inv * (self.theta.adjoint() * w)
    }
}

/// `Θ = [e_1, …, e_M]`, `Θ⊥ = [e_{M+1}, …, e_L]`.
pub fn standard_basis_subspace(dim: usize, rank: usize) -> Result<SubspacePair> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidInput(format!(
            "standard basis needs 1 <= M <= L, got M={rank}, L={dim}"
        )));
    }
    let id = linalg::identity(dim);
    let theta = id.columns(0, rank).into_owned();
    let theta_perp = id.columns(rank, dim - rank).into_owned();
    Ok(SubspacePair::assemble(theta, theta_perp))
}

/// Steering matrix of a uniform linear array: `Θ[l][m] = exp(-j l ψ_m)` with
/// `ψ_m = 2π (d/λ₀) sin θ_m`. Columns are left unnormalized.
pub fn ula_vandermonde_subspace(dim: usize, angles: &[f64], spacing_ratio: f64) -> Result<SubspacePair> {
    let rank = angles.len();
    if rank == 0 || rank > dim {
        return Err(Error::InvalidInput(format!(
            "ULA subspace needs 1 <= M <= L, got M={rank}, L={dim}"
        )));
    }
    let psi: Vec<f64> = angles
        .iter()
        .map(|a| 2.0 * PI * spacing_ratio * a.sin())
        .collect();
    let theta = CMat::from_fn(dim, rank, |l, m| {
        let (s, co) = (-(l as f64) * psi[m]).sin_cos();
        c(co, s)
    });
    SubspacePair::from_theta(theta)
}

/// Orthonormal basis of the orthogonal complement of `span(Θ)`.
///
/// Computed from a full SVD of `[Θ | 0]`: the left singular vectors paired
/// with the vanishing singular values span the complement.
pub fn orthonormal_complement(theta: &CMat) -> Result<CMat> {
    let (l, m) = theta.shape();
    if m == 0 {
        return Ok(linalg::identity(l));
    }
    if m > l {
        return Err(Error::InvalidInput(format!("Θ is {l}x{m}; needs M <= L")));
    }
    let sv = linalg::singular_values(theta);
    let largest = sv[0];
    let smallest = sv[m - 1];
    if !(smallest > RANK_TOL * largest) {
        return Err(Error::RankDeficient { singular_values: sv });
    }
    if m == l {
        return Ok(CMat::zeros(l, 0));
    }
    let mut padded = CMat::zeros(l, l);
    padded.columns_mut(0, m).copy_from(theta);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut perp = CMat::zeros(l, l - m);
    for (j, &col) in order.iter().take(l - m).enumerate() {
        perp.set_column(j, &u.column(col));
    }
    Ok(perp)
}

/// Positive-definiteness certificate of a Schur complement.
#[derive(Debug, Clone)]
pub struct UniquenessCertificate {
    pub schur_complement: CMat,
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

impl UniquenessCertificate {
    fn from_schur(schur: CMat) -> Self {
        let min_eigenvalue = linalg::min_hermitian_eigenvalue(&schur);
        Self {
            positive_definite: min_eigenvalue > CERTIFICATE_TOL,
            min_eigenvalue,
            schur_complement: schur,
        }
    }
}

fn check_covariances(covariances: &[CMat], dim: usize) -> Result<()> {
    if covariances.is_empty() {
        return Err(Error::InvalidInput("at least one covariance is required".into()));
    }
    for (k, r) in covariances.iter().enumerate() {
        if r.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!(
                "covariance {k} is {:?}, expected {dim}x{dim}",
                r.shape()
            )));
        }
        linalg::cholesky_factor(r)
            .map_err(|e| Error::NotPositiveDefinite(format!("covariance {k}: {e}")))?;
    }
    Ok(())
}

/// Schur complement of the Hessian of the subspace-constrained cost:
/// `Σ_k [Θ*RΘ − Θ*RΘ⊥ (Θ⊥*RΘ⊥)^{-1} Θ⊥*RΘ]`.
pub fn lemma1_certificate(pair: &SubspacePair, covariances: &[CMat]) -> Result<UniquenessCertificate> {
    check_covariances(covariances, pair.dim())?;
    let theta = pair.theta();
    let perp = pair.theta_perp();
    let m = pair.rank();
    let mut schur = CMat::zeros(m, m);
    for (k, r) in covariances.iter().enumerate() {
        let trt = theta.adjoint() * r * theta;
        if perp.ncols() == 0 {
            schur += trt;
            continue;
        }
        let cross = theta.adjoint() * r * perp;
        let inner = perp.adjoint() * r * perp;
        let inner_inv = linalg::hpd_inverse(&inner).map_err(|_| {
            Error::NotPositiveDefinite(format!("Θ⊥* R_{k} Θ⊥ is singular"))
        })?;
        schur += trt - &cross * inner_inv * cross.adjoint();
    }
    Ok(UniquenessCertificate::from_schur(linalg::hermitian_part(&schur)))
}

/// Schur complement of the Hessian of the norm-regularized cost:
/// `Σ_k [Θ*RΘ − Θ*R (R + η₂I)^{-1} RΘ]`.
pub fn lemma2_certificate(theta: &CMat, covariances: &[CMat], eta2: f64) -> Result<UniquenessCertificate> {
    if !(eta2 > 0.0) {
        return Err(Error::InvalidInput(format!("η₂ must be positive, got {eta2}")));
    }
    check_covariances(covariances, theta.nrows())?;
    let l = theta.nrows();
    let m = theta.ncols();
    let mut schur = CMat::zeros(m, m);
    for r in covariances {
        let shifted = r + linalg::identity(l).scale(eta2);
        let inv = linalg::hpd_inverse(&shifted)?;
        schur += theta.adjoint() * r * theta - theta.adjoint() * r * inv * r * theta;
    }
    Ok(UniquenessCertificate::from_schur(linalg::hermitian_part(&schur)))
}
