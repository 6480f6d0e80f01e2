//! Ground-truth task construction and streaming measurement generation under
//! the linear model `d = x w^o + z`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::network::NetworkTopology;
use crate::rng;
use crate::subspace::SubspacePair;

/// Per-agent regressor covariance, noise level and optimum.
#[derive(Debug, Clone)]
pub struct AgentEnvironment {
    covariance: CMat,
    covariance_factor: CMat,
    noise_variance: f64,
    w_opt: CVec,
    input_variance: f64,
}

impl AgentEnvironment {
    /// `input_variance` is the scalar `σ²_x` the covariance was scaled by; it is
    /// reported alongside results and not used by the model itself.
    pub fn new(covariance: CMat, noise_variance: f64, w_opt: CVec, input_variance: f64) -> Result<Self> {
        if covariance.nrows() != w_opt.len() {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, optimum has length {}",
                covariance.nrows(),
                covariance.ncols(),
                w_opt.len()
            )));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidInput(format!("noise variance must be >= 0, got {noise_variance}")));
        }
        let covariance_factor = linalg::cholesky_factor(&covariance)?;
        Ok(Self { covariance, covariance_factor, noise_variance, w_opt, input_variance })
    }

    pub fn dim(&self) -> usize {
        self.w_opt.len()
    }

    pub fn covariance(&self) -> &CMat {
        &self.covariance
    }

    /// Lower-triangular `F` with `F F* = R`.
    pub fn covariance_factor(&self) -> &CMat {
        &self.covariance_factor
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn w_opt(&self) -> &CVec {
        &self.w_opt
    }

    pub fn input_variance(&self) -> f64 {
        self.input_variance
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn with_w_opt(mut self, w_opt: CVec) -> Self {
        assert_eq!(w_opt.len(), self.dim());
        self.w_opt = w_opt;
        self
    }
}

/// `w_k^o = Θ(u^o + ν_k^o) + Θ⊥ ξ_k^o`.
#[derive(Debug, Clone)]
pub struct TaskModel {
    pub u_common: CVec,
    pub xi_locals: Vec<CVec>,
    pub nu_locals: Option<Vec<CVec>>,
    pub pair: SubspacePair,
}

impl TaskModel {
    pub fn n_agents(&self) -> usize {
        self.xi_locals.len()
    }

    pub fn optimum(&self, k: usize) -> CVec {
        let mut u = self.u_common.clone();
        if let Some(nu) = &self.nu_locals {
            u += &nu[k];
        }
        self.pair.theta() * u + self.pair.theta_perp() * &self.xi_locals[k]
    }

    pub fn optima(&self) -> Vec<CVec> {
        (0..self.n_agents()).map(|k| self.optimum(k)).collect()
    }
}

fn complex_gaussian_vec<R: Rng + ?Sized>(r: &mut R, len: usize, stddev: f64) -> CVec {
    CVec::from_fn(len, |_, _| rng::complex_normal(r, stddev * stddev))
}

/// Draws `u^o` once and `ξ_k^o` (and `ν_k^o` when `nu_stddev > 0`) per agent.
/// Entries are circular complex Gaussian with variance `stddev²`.
pub fn sample_tasks(
    pair: &SubspacePair,
    n_agents: usize,
    u_stddev: f64,
    xi_stddev: f64,
    nu_stddev: f64,
    seed: u64,
) -> Result<TaskModel> {
    for (name, s) in [("u", u_stddev), ("xi", xi_stddev), ("nu", nu_stddev)] {
        if !(s >= 0.0) {
            return Err(Error::InvalidInput(format!("{name} stddev must be >= 0, got {s}")));
        }
    }
    if n_agents == 0 {
        return Err(Error::InvalidInput("n_agents must be >= 1".into()));
    }
    let mut r = rng::stream(seed, &[rng::TAG_TASKS]);
    let m = pair.rank();
    let perp = pair.dim() - m;
    let u_common = complex_gaussian_vec(&mut r, m, u_stddev);
    let xi_locals = (0..n_agents).map(|_| complex_gaussian_vec(&mut r, perp, xi_stddev)).collect();
    let nu_locals = (nu_stddev > 0.0)
        .then(|| (0..n_agents).map(|_| complex_gaussian_vec(&mut r, m, nu_stddev)).collect());
    Ok(TaskModel { u_common, xi_locals, nu_locals, pair: pair.clone() })
}

/// Regressor covariance family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    White,
    Correlated,
}

/// First row of the correlated Hermitian Toeplitz covariance.
const CORRELATED_ROW: [(f64, f64); 5] = [(1.0, 0.0), (-0.4, 0.3), (0.2, -0.1), (0.1, -0.05), (0.02, 0.02)];

/// `σ²` times the fixed 5×5 Hermitian Toeplitz covariance.
pub fn correlated_covariance(sigma_sq: f64) -> Result<CMat> {
    if !(sigma_sq > 0.0) {
        return Err(Error::InvalidInput(format!("σ² must be positive, got {sigma_sq}")));
    }
    let m = CMat::from_fn(5, 5, |i, j| {
        let (re, im) = CORRELATED_ROW[i.abs_diff(j)];
        let z = c(re, im);
        if i <= j { z } else { z.conj() }
    });
    let m = m.scale(sigma_sq);
    assert!(linalg::min_hermitian_eigenvalue(&m) > 0.0, "correlated covariance must be PD");
    Ok(m)
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidInput(format!("{name} range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
    }
    Ok(())
}

/// Draws `σ²_{x,k} ~ U(input range)`, `σ²_{z,k} ~ U(noise range)` per agent.
pub fn sample_environments(
    topology: &NetworkTopology,
    tasks: &TaskModel,
    input_variance_range: (f64, f64),
    noise_variance_range: (f64, f64),
    kind: InputKind,
    seed: u64,
) -> Result<Vec<AgentEnvironment>> {
    check_range("input variance", input_variance_range)?;
    check_range("noise variance", noise_variance_range)?;
    let n = topology.n_agents();
    if tasks.n_agents() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} tasks for a {n}-agent topology",
            tasks.n_agents()
        )));
    }
    let l = tasks.pair.dim();
    if kind == InputKind::Correlated && l != 5 {
        return Err(Error::Unsupported(format!("correlated inputs are defined for L = 5, got L = {l}")));
    }
    let mut r = rng::stream(seed, &[rng::TAG_ENVIRONMENTS]);
    (0..n)
        .map(|k| {
            let sx = rng::uniform(&mut r, input_variance_range.0, input_variance_range.1);
            let sz = rng::uniform(&mut r, noise_variance_range.0, noise_variance_range.1);
            let cov = match kind {
                InputKind::White => linalg::identity(l).scale(sx),
                InputKind::Correlated => correlated_covariance(sx)?,
            };
            AgentEnvironment::new(cov, sz, tasks.optimum(k), sx)
        })
        .collect()
}

/// Fills `x` with a fresh regressor row and returns `d = x w^o + z`.
///
/// `x = g F*` with `g` a unit-variance circular Gaussian row, so `E{x* x} = R`.
pub fn emit_measurement_into<R: Rng + ?Sized>(env: &AgentEnvironment, r: &mut R, x: &mut CVec) -> Complex64 {
    let f = &env.covariance_factor;
    x.fill(linalg::ZERO);
    // F is lower triangular, so g_j only reaches entries i >= j
    for j in 0..env.dim() {
        let gj = rng::complex_normal(r, 1.0);
        for i in j..env.dim() {
            x[i] += gj * f[(i, j)].conj();
        }
    }
    let z = rng::complex_normal(r, env.noise_variance);
    x.dot(&env.w_opt) + z
}

/// Returns `(d, x)` with `x` holding the entries of the regressor row.
pub fn emit_measurement<R: Rng + ?Sized>(env: &AgentEnvironment, r: &mut R) -> (Complex64, CVec) {
    let mut x = CVec::zeros(env.dim());
    let d = emit_measurement_into(env, r, &mut x);
    (d, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::validation_fixture;
    use crate::subspace::{standard_basis_subspace, ula_vandermonde_subspace};

    #[test]
    fn correlated_entry_and_hermitian() {
        let m = correlated_covariance(1.0).unwrap();
        assert_eq!(m[(1, 0)], c(-0.4, -0.3));
        assert_eq!(m[(0, 1)], c(-0.4, 0.3));
        assert_eq!(m[(4, 0)], c(0.02, -0.02));
        assert_eq!(m, m.adjoint());
    }

    #[test]
    fn correlated_eigenvalues_pinned() {
        // pinned once from an independent eigen-solve of the literal
        let pinned = [0.09568517410643997, 0.6242800815117039, 0.7483043771965705, 1.486401775341171, 2.0453285918441138];
        let eig = linalg::hermitian_eigenvalues(&correlated_covariance(1.0).unwrap());
        for (a, b) in eig.iter().zip(&pinned) {
            assert!((a - b).abs() < 1e-8, "{eig:?}");
        }
        let sum: f64 = eig.iter().sum();
        assert!((sum - 5.0).abs() < 1e-12);
        let scaled = linalg::hermitian_eigenvalues(&correlated_covariance(0.3).unwrap());
        for (a, b) in eig.iter().zip(&scaled) {
            assert!((a * 0.3 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn correlated_rejects_nonpositive_scale() {
        assert!(correlated_covariance(0.0).is_err());
    }

    #[test]
    fn task_decomposition_recovered() {
        let pair = ula_vandermonde_subspace(5, &[0.5, 0.9, 1.2], 0.5).unwrap();
        let tasks = sample_tasks(&pair, 12, 1.0, 1.0, 0.1, 4).unwrap();
        let nu = tasks.nu_locals.as_ref().unwrap();
        for k in 0..12 {
            let w = tasks.optimum(k);
            let u = pair.latent_coordinates(&w);
            assert!(linalg::max_abs_vec(&(u - &tasks.u_common - &nu[k])) < 1e-12);
        }
    }

    #[test]
    fn zero_xi_gives_single_task() {
        let pair = standard_basis_subspace(5, 3).unwrap();
        let tasks = sample_tasks(&pair, 4, 1.0, 0.0, 0.0, 1).unwrap();
        assert!(tasks.nu_locals.is_none());
        let w = tasks.optima();
        for k in 1..4 {
            assert_eq!(w[k], w[0]);
        }
    }

    #[test]
    fn environments_within_ranges_and_deterministic() {
        let top = validation_fixture();
        let pair = standard_basis_subspace(5, 3).unwrap();
        let tasks = sample_tasks(&pair, 12, 1.0, 1.0, 0.0, 9).unwrap();
        let a = sample_environments(&top, &tasks, (0.8, 1.2), (0.18, 0.22), InputKind::White, 9).unwrap();
        let b = sample_environments(&top, &tasks, (0.8, 1.2), (0.18, 0.22), InputKind::White, 9).unwrap();
        for (ea, eb) in a.iter().zip(&b) {
            assert!((0.18..=0.22).contains(&ea.noise_variance()));
            assert!((0.8..=1.2).contains(&ea.input_variance()));
            let want = linalg::identity(5).scale(ea.input_variance());
            assert_eq!(ea.covariance(), &want);
            assert_eq!(ea.covariance(), eb.covariance());
            assert_eq!(ea.noise_variance().to_bits(), eb.noise_variance().to_bits());
        }
    }

    fn correlated_env(w: CVec) -> AgentEnvironment {
        AgentEnvironment::new(correlated_covariance(1.1).unwrap(), 0.2, w, 1.1).unwrap()
    }

    #[test]
    fn factor_reproduces_covariance() {
        let env = correlated_env(CVec::zeros(5));
        let f = env.covariance_factor();
        assert!(linalg::max_abs(&(f * f.adjoint() - env.covariance())) < 1e-12);
    }

    #[test]
    fn measurement_moments() {
        let w = CVec::from_fn(5, |i, _| c(0.3 * i as f64 - 0.5, 0.2));
        let env = correlated_env(w.clone());
        let mut r = rng::stream(77, &[]);
        let n = 100_000;
        let mut cov = CMat::zeros(5, 5);
        let mut pseudo = CMat::zeros(5, 5);
        let mut p_dx = CVec::zeros(5);
        let mut zx = CVec::zeros(5);
        for _ in 0..n {
            let (d, x) = emit_measurement(&env, &mut r);
            let xc = x.conjugate();
            cov += &xc * x.transpose();
            pseudo += &x * x.transpose();
            p_dx += xc.scale(1.0) * d;
            let z = d - x.dot(&w);
            zx += xc * z;
        }
        let nf = n as f64;
        let cov = cov.unscale(nf);
        let rel = (&cov - env.covariance()).norm() / env.covariance().norm();
        assert!(rel < 0.02, "covariance rel err {rel}");
        assert!(linalg::max_abs(&pseudo.unscale(nf)) < 0.02);
        let want = env.covariance() * &w;
        let rel = (p_dx.unscale(nf) - &want).norm() / want.norm();
        assert!(rel < 0.05, "p_dx rel err {rel}");
        assert!(linalg::max_abs_vec(&zx.unscale(nf)) < 0.02);
    }

    #[test]
    fn zero_optimum_gives_noise_only() {
        let env = correlated_env(CVec::zeros(5));
        let mut r = rng::stream(78, &[]);
        let n = 100_000;
        let var: f64 = (0..n).map(|_| emit_measurement(&env, &mut r).0.norm_sqr()).sum::<f64>() / n as f64;
        assert!((var / 0.2 - 1.0).abs() < 0.05, "{var}");
    }
}
