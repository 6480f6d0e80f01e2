//! Closed-form performance predictor: mean recursion and bias, step-size
//! bounds, the matrix-free variance operator `K = Bᵀ ⊗ B*`, and the transient
//! and steady-state network MSD.
//!
//! Weighted norms are represented by Hermitian matrices `Σ` and paired with
//! second-order terms through `tr(S Σ)`; `K vec(Σ) = vec(B* Σ B)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::algorithms::Variant;
use crate::datamodel::AgentEnvironment;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::network::CombinationMatrix;
use crate::subspace::SubspacePair;

/// Largest `N·L` for which a dense model is assembled.
pub const MAX_MODEL_SIZE: usize = 256;
/// Relative Frobenius tolerance of the steady-state fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 64;

/// Which driving-noise covariance to use for the leaky variant.
///
/// `Wrapped` keeps the combination operator around the adaptation noise,
/// `μ² C Λ C*`, as the weight-error recursion produces it. `Displayed` drops
/// it, `μ² Λ`, with `Λ = diag{σ²_{z,k} R_{x,k}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseForm {
    #[default]
    Wrapped,
    Displayed,
}

/// Dense mean-transition matrix `B`, noise covariance `G` (without the `μ²`
/// factor), bias driver `r` and the block-diagonal regressor covariance `H_x`.
#[derive(Debug, Clone)]
pub struct TheoreticalModel {
    pub variant: Variant,
    pub b_matrix: CMat,
    pub g_matrix: CMat,
    pub r_vector: CVec,
    pub h_x: CMat,
    /// `C = 𝒜ᵀ D_{P_Θ} + D_{P_Θ⊥}`.
    pub combine_matrix: CMat,
    pub w_opt: CVec,
    pub step_size: f64,
    pub n_agents: usize,
    pub dim: usize,
}

impl TheoreticalModel {
    pub fn size(&self) -> usize {
        self.n_agents * self.dim
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.b_matrix)
    }

    fn require_stable(&self) -> Result<f64> {
        let rho = self.spectral_radius()?;
        if rho < 1.0 {
            Ok(rho)
        } else {
            Err(Error::Unstable { spectral_radius: rho })
        }
    }

    /// `S = μ² G + r r* − (B e r* + r e* B*)` for the mean error `e`.
    pub fn s_matrix(&self, mean: &CVec) -> CMat {
        let mu2 = self.step_size * self.step_size;
        let r = &self.r_vector;
        let be = &self.b_matrix * mean;
        let cross = &be * r.adjoint();
        self.g_matrix.scale(mu2) + r * r.adjoint() - &cross - cross.adjoint()
    }
}

/// `blockdiag{P, …, P}` and friends.
fn stacked(block: &CMat, n: usize) -> CMat {
    linalg::repeat_block_diag(block, n)
}

/// `𝒜ᵀ D_{P_Θ} + D_{P_Θ⊥}`: block `(k, ℓ)` is `a_{ℓk} P_Θ`, plus `P_Θ⊥` on
/// the diagonal.
pub fn combine_operator(a: &CombinationMatrix, pair: &SubspacePair) -> CMat {
    let (n, l) = (a.n_agents(), pair.dim());
    let mut c = CMat::zeros(n * l, n * l);
    for k in 0..n {
        for j in 0..n {
            let w = a.weight(j, k);
            if w != 0.0 {
                c.view_mut((k * l, j * l), (l, l)).copy_from(&pair.p_theta().scale(w));
            }
        }
        let mut blk = c.view_mut((k * l, k * l), (l, l));
        blk += pair.p_theta_perp();
    }
    c
}

/// Stacks agent vectors into one `N·L` vector.
pub fn stack(vectors: &[CVec]) -> CVec {
    let l = vectors.first().map_or(0, |v| v.len());
    let mut out = CVec::zeros(vectors.len() * l);
    for (k, v) in vectors.iter().enumerate() {
        out.rows_mut(k * l, l).copy_from(v);
    }
    out
}

/// Splits an `N·L` vector into agent vectors.
pub fn unstack(v: &CVec, dim: usize) -> Vec<CVec> {
    (0..v.len() / dim).map(|k| v.rows(k * dim, dim).into_owned()).collect()
}

/// Assembles `B`, `G`, `r` for `alg1`, `alg1_identity_s` or `alg2`.
pub fn build_model(
    variant: Variant,
    combination: &CombinationMatrix,
    pair: &SubspacePair,
    environments: &[AgentEnvironment],
    mu: f64,
    eta2: f64,
    w_opt_stacked: &CVec,
) -> Result<TheoreticalModel> {
    build_model_with(variant, combination, pair, environments, mu, eta2, w_opt_stacked, NoiseForm::default())
}

#[allow(clippy::too_many_arguments)]
pub fn build_model_with(
    variant: Variant,
    combination: &CombinationMatrix,
    pair: &SubspacePair,
    environments: &[AgentEnvironment],
    mu: f64,
    eta2: f64,
    w_opt_stacked: &CVec,
    noise_form: NoiseForm,
) -> Result<TheoreticalModel> {
    if !variant.is_cooperative() {
        return Err(Error::Unsupported(format!("no performance model for variant {variant}")));
    }
    let n = combination.n_agents();
    let l = pair.dim();
    if environments.len() != n || environments.iter().any(|e| e.dim() != l) {
        return Err(Error::DimensionMismatch(format!(
            "{} environments for N={n}, L={l}",
            environments.len()
        )));
    }
    if w_opt_stacked.len() != n * l {
        return Err(Error::DimensionMismatch(format!(
            "stacked optimum has length {}, expected {}",
            w_opt_stacked.len(),
            n * l
        )));
    }
    if n * l > MAX_MODEL_SIZE {
        return Err(Error::Unsupported(format!(
            "performance model needs N·L <= {MAX_MODEL_SIZE}, got {}",
            n * l
        )));
    }
    if !(mu >= 0.0) || !(eta2 >= 0.0) {
        return Err(Error::InvalidInput(format!("μ and η₂ must be >= 0, got {mu}, {eta2}")));
    }
    let nl = n * l;
    let id = linalg::identity(nl);
    let c = combine_operator(combination, pair);
    let d_p = stacked(pair.p_theta(), n);
    let d_perp = stacked(pair.p_theta_perp(), n);
    let h_x = linalg::block_diag(&environments.iter().map(|e| e.covariance().clone()).collect::<Vec<_>>());
    let lambda = linalg::block_diag(
        &environments
            .iter()
            .map(|e| e.covariance().scale(e.noise_variance()))
            .collect::<Vec<_>>(),
    );
    let mut a_t = CMat::zeros(nl, nl);
    for k in 0..n {
        for j in 0..n {
            let w = combination.weight(j, k);
            if w != 0.0 {
                a_t.view_mut((k * l, j * l), (l, l)).fill_diagonal(linalg::c(w, 0.0));
            }
        }
    }
    let r1 = (&a_t - &id) * &d_p * w_opt_stacked;
    let (b, g, r) = match variant {
        Variant::Alg1 | Variant::Alg1IdentityS => {
            let d_s = if variant == Variant::Alg1 { stacked(pair.s_theta(), n) } else { id.clone() };
            let b = &c * (&id - (&d_s * &h_x).scale(mu));
            let cds = &c * &d_s;
            let g = &cds * &lambda * cds.adjoint();
            (b, g, r1)
        }
        Variant::Alg2 => {
            let b = &c * (&id - d_perp.scale(mu * eta2) - h_x.scale(mu));
            let g = match noise_form {
                NoiseForm::Wrapped => &c * &lambda * c.adjoint(),
                NoiseForm::Displayed => lambda.clone(),
            };
            let r = r1 - (&c * &d_perp * w_opt_stacked).scale(mu * eta2);
            (b, g, r)
        }
        _ => unreachable!("rejected above"),
    };
    Ok(TheoreticalModel {
        variant,
        b_matrix: b,
        g_matrix: linalg::hermitian_part(&g),
        r_vector: r,
        h_x,
        combine_matrix: c,
        w_opt: w_opt_stacked.clone(),
        step_size: mu,
        n_agents: n,
        dim: l,
    })
}

/// `E{v_n} = B E{v_{n−1}} − r` for `n = 0..=n_iterations`.
pub fn mean_recursion(model: &TheoreticalModel, v0: &CVec, n_iterations: usize) -> Vec<CVec> {
    let mut out = Vec::with_capacity(n_iterations + 1);
    let mut e = v0.clone();
    out.push(e.clone());
    for _ in 0..n_iterations {
        e = &model.b_matrix * &e - &model.r_vector;
        out.push(e.clone());
    }
    out
}

/// Steady-state mean error `−(I − B)^{-1} r`.
pub fn bias(model: &TheoreticalModel) -> Result<CVec> {
    model.require_stable()?;
    let nl = model.size();
    let lhs = linalg::identity(nl) - &model.b_matrix;
    let sol = lhs
        .lu()
        .solve(&model.r_vector)
        .ok_or_else(|| Error::Unstable { spectral_radius: 1.0 })?;
    Ok(-sol)
}

/// A step-size bound and whether the closed form is guaranteed for the
/// inputs it was evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizeBound {
    pub value: f64,
    pub guaranteed: bool,
}

/// `2 / max_k λ_max(R_{x,k})`, or `2 / (η₂ + max_k λ_max(R_{x,k}))` for the
/// leaky variants. The closed form is not guaranteed for `alg1` when the
/// subspace pair is not orthonormal; check `ρ(B)` instead.
pub fn step_size_bound(
    variant: Variant,
    environments: &[AgentEnvironment],
    eta2: f64,
    pair: &SubspacePair,
) -> Result<StepSizeBound> {
    if environments.is_empty() {
        return Err(Error::InvalidInput("no environments".into()));
    }
    let lambda_max = environments
        .iter()
        .map(|e| linalg::max_hermitian_eigenvalue(e.covariance()))
        .fold(f64::NEG_INFINITY, f64::max);
    let (value, guaranteed) = match variant {
        Variant::Alg1 => (2.0 / lambda_max, pair.is_orthonormal()),
        Variant::Alg1IdentityS | Variant::NoncoopLms => (2.0 / lambda_max, true),
        Variant::Alg2 | Variant::NoncoopLeaky => (2.0 / (eta2 + lambda_max), true),
    };
    Ok(StepSizeBound { value, guaranteed })
}

/// `K` applied to `Σ`: returns `B* Σ B`, so `vec(result) = (Bᵀ⊗B*) vec(Σ)`.
pub fn apply_k(model: &TheoreticalModel, sigma: &CMat) -> CMat {
    linalg::sandwich(&model.b_matrix.adjoint(), sigma)
}

/// Adjoint of [`apply_k`] under `⟨F, Σ⟩ = tr(F Σ)`: returns `B F B*`.
pub fn apply_k_adjoint(model: &TheoreticalModel, f: &CMat) -> CMat {
    linalg::sandwich(&model.b_matrix, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Simulated,
    Predicted,
}

/// Per-iteration network MSD, `values_db[n]` for `n = 0, 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct MSDCurve {
    pub values_db: Vec<f64>,
    pub kind: CurveKind,
    pub meta: String,
    pub diverged_at: Option<usize>,
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl MSDCurve {
    pub fn from_linear(values: &[f64], kind: CurveKind, meta: impl Into<String>) -> Self {
        Self { values_db: values.iter().map(|&v| to_db(v)).collect(), kind, meta: meta.into(), diverged_at: None }
    }

    pub fn linear(&self) -> Vec<f64> {
        self.values_db.iter().map(|&v| from_db(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.values_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_db.is_empty()
    }

    /// Mean of the linear MSD over the last `fraction` of iterations, in dB.
    pub fn tail_average_db(&self, fraction: f64) -> f64 {
        let n = self.values_db.len();
        let count = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        let tail = &self.values_db[n - count..];
        to_db(tail.iter().map(|&v| from_db(v)).sum::<f64>() / count as f64)
    }

    /// CSV with columns `iteration,msd_db`.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iteration,msd_db")?;
        for (i, v) in self.values_db.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }
}

/// Transient network MSD `ζ_n`, `n = 0..=n_iterations`.
///
/// Runs the `γ` recursion in matrix form alongside the mean recursion:
/// `Γ_n = B (Γ_{n−1} + S_{n−1}) B* − S_{n−1}` with `Γ_0 = 0`, and
/// `P_n = B P_{n−1} B*` with `P_0 = v₀v₀*`, so that
/// `ζ_n = ζ_{n−1} + (1/N)[tr Γ_{n−1} + tr S_{n−1} + tr P_n − tr P_{n−1}]`.
/// `P_n` stays rank one, `p_n p_n*` with `p_n = B p_{n−1}`.
pub fn transient_msd(model: &TheoreticalModel, v0: &CVec, n_iterations: usize) -> Result<MSDCurve> {
    model.require_stable()?;
    if v0.len() != model.size() {
        return Err(Error::DimensionMismatch(format!("v0 has length {}, expected {}", v0.len(), model.size())));
    }
    let inv_n = 1.0 / model.n_agents as f64;
    let nl = model.size();
    let mut zeta = v0.norm_squared() * inv_n;
    let mut values = Vec::with_capacity(n_iterations + 1);
    values.push(zeta);
    let mut gamma = CMat::zeros(nl, nl);
    let mut p = v0.clone();
    let mut mean = v0.clone();
    for _ in 0..n_iterations {
        let s = model.s_matrix(&mean);
        let p_next = &model.b_matrix * &p;
        zeta += inv_n * (gamma.trace().re + s.trace().re + p_next.norm_squared() - p.norm_squared());
        values.push(zeta);
        gamma = apply_k_adjoint(model, &(&gamma + &s)) - s;
        p = p_next;
        mean = &model.b_matrix * &mean - &model.r_vector;
    }
    Ok(MSDCurve::from_linear(&values, CurveKind::Predicted, format!("predicted {}", model.variant)))
}

/// Steady-state network MSD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub linear: f64,
    pub db: f64,
    /// Doubling steps used by the fixed-point solve.
    pub iterations: usize,
}

/// Solves `Σ = (1/N) I + B* Σ B` by doubling: `Σ ← Σ + Aₖ* Σ Aₖ`,
/// `Aₖ₊₁ = Aₖ²`, until the relative Frobenius change is below tolerance.
pub fn weighting_fixed_point(model: &TheoreticalModel) -> Result<(CMat, usize)> {
    let nl = model.size();
    let mut sigma = linalg::identity(nl).unscale(model.n_agents as f64);
    let mut a = model.b_matrix.clone();
    for it in 1..=MAX_DOUBLINGS {
        let delta = linalg::sandwich(&a.adjoint(), &sigma);
        sigma += &delta;
        if !sigma.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            break;
        }
        if delta.norm() <= FIXED_POINT_TOL * sigma.norm() {
            return Ok((linalg::hermitian_part(&sigma), it));
        }
        a = linalg::matmul(&a, &a);
    }
    Err(Error::NotConverged { iterations: MAX_DOUBLINGS })
}

/// `ζ_∞ = tr(S_∞ Σ)` with `Σ` the fixed point and `S_∞` evaluated at the bias.
pub fn steady_state_msd(model: &TheoreticalModel) -> Result<SteadyState> {
    model.require_stable()?;
    let e_inf = bias(model)?;
    let (sigma, iterations) = weighting_fixed_point(model)?;
    let linear = linalg::trace_product(&model.s_matrix(&e_inf), &sigma).re;
    Ok(SteadyState { linear, db: to_db(linear), iterations })
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &CMat) -> Result<f64> {
    linalg::spectral_radius(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs};
    use crate::network::{build_topology, metropolis_combination, uniform_combination};
    use crate::subspace::standard_basis_subspace;

    fn toy_envs() -> Vec<AgentEnvironment> {
        let w = [(1.0, 0.5), (1.0, -0.3)];
        w.iter()
            .enumerate()
            .map(|(k, &(a, b))| {
                let s = 1.0 + 0.2 * k as f64;
                AgentEnvironment::new(
                    linalg::identity(2).scale(s),
                    0.1,
                    CVec::from_vec(vec![c(a, 0.0), c(b, 0.0)]),
                    s,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn two_node_toy_hand_assembled() {
        // N=2, L=2, M=1, uniform A = all 1/2, white R_k = s_k I
        let top = build_topology(2, &[(0, 1)]).unwrap();
        let a = uniform_combination(&top);
        let pair = standard_basis_subspace(2, 1).unwrap();
        let envs = toy_envs();
        let w = stack(&envs.iter().map(|e| e.w_opt().clone()).collect::<Vec<_>>());
        let mu = 0.1;
        let m = build_model(Variant::Alg1, &a, &pair, &envs, mu, 0.0, &w).unwrap();
        // B[(i,j)]: tap 0 averaged across agents, tap 1 local
        let f = |s: f64| 1.0 - mu * s;
        let (f0, f1) = (f(1.0), f(1.2));
        let want = CMat::from_row_slice(4, 4, &[
            c(0.5 * f0, 0.0), c(0.0, 0.0), c(0.5 * f1, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(f0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            c(0.5 * f0, 0.0), c(0.0, 0.0), c(0.5 * f1, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(f1, 0.0),
        ]);
        assert!(max_abs(&(&m.b_matrix - want)) < 1e-15);
        // common first tap: r = 0
        assert!(linalg::max_abs_vec(&m.r_vector) < 1e-15);
        assert!(linalg::is_hermitian(&m.g_matrix, 1e-14));
        assert!(linalg::min_hermitian_eigenvalue(&m.g_matrix) > -1e-12);
    }

    #[test]
    fn zero_step_operator_norm_at_most_one() {
        let top = build_topology(3, &[(0, 1), (1, 2)]).unwrap();
        let a = metropolis_combination(&top);
        let pair = standard_basis_subspace(2, 1).unwrap();
        let mut envs = toy_envs();
        envs.push(envs[0].clone());
        let w = stack(&envs.iter().map(|e| e.w_opt().clone()).collect::<Vec<_>>());
        let m = build_model(Variant::Alg1, &a, &pair, &envs, 0.0, 0.0, &w).unwrap();
        assert!(linalg::operator_norm(&m.b_matrix) <= 1.0 + 1e-12);
        assert!(spectral_radius(&m.b_matrix).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn noncooperative_variants_rejected() {
        let top = build_topology(2, &[(0, 1)]).unwrap();
        let pair = standard_basis_subspace(2, 1).unwrap();
        let envs = toy_envs();
        let w = CVec::zeros(4);
        let r = build_model(Variant::NoncoopLms, &uniform_combination(&top), &pair, &envs, 0.1, 0.0, &w);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn bias_rejects_unstable_model() {
        let top = build_topology(2, &[(0, 1)]).unwrap();
        let pair = standard_basis_subspace(2, 1).unwrap();
        let envs = toy_envs();
        let w = CVec::zeros(4);
        let m = build_model(Variant::Alg1, &uniform_combination(&top), &pair, &envs, 5.0, 0.0, &w).unwrap();
        assert!(matches!(bias(&m), Err(Error::Unstable { .. })));
        assert!(matches!(steady_state_msd(&m), Err(Error::Unstable { .. })));
    }

    #[test]
    fn step_size_bounds_white_unit() {
        let pair = standard_basis_subspace(2, 1).unwrap();
        let env = AgentEnvironment::new(linalg::identity(2), 0.1, CVec::zeros(2), 1.0).unwrap();
        let envs = vec![env; 3];
        let b1 = step_size_bound(Variant::Alg1IdentityS, &envs, 0.0, &pair).unwrap();
        assert_eq!(b1, StepSizeBound { value: 2.0, guaranteed: true });
        let b2 = step_size_bound(Variant::Alg2, &envs, 0.5, &pair).unwrap();
        assert!((b2.value - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn curve_tail_and_csv() {
        let curve = MSDCurve::from_linear(&[1.0, 0.1, 0.01, 0.01], CurveKind::Predicted, "t");
        assert!((curve.values_db[1] + 10.0).abs() < 1e-12);
        assert!((curve.tail_average_db(0.5) + 20.0).abs() < 1e-12);
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,msd_db\n0,0\n1,-10\n"));
    }
}
