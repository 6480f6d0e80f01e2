#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subdiff::algorithms::Variant;
use subdiff::datamodel::AgentEnvironment;
use subdiff::linalg::{self, c, CMat, CVec};
use subdiff::network::{self, CombinationMatrix, NetworkTopology};
use subdiff::subspace::SubspacePair;
use subdiff::theory::{self, TheoreticalModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle independent of the crate's samplers.
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_cmat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(gauss(r), gauss(r)))
}

pub fn random_cvec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> CVec {
    CVec::from_fn(n, |_, _| c(scale * gauss(r), scale * gauss(r)))
}

/// `A A* / dim + floor I`.
pub fn random_pd(r: &mut ChaCha8Rng, dim: usize, floor: f64) -> CMat {
    let a = random_cmat(r, dim, dim);
    (&a * a.adjoint()).unscale(dim as f64) + linalg::identity(dim).scale(floor)
}

/// Gram-Schmidt on the columns of `a`.
pub fn orthonormal_columns(a: &CMat) -> CMat {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let qi = q.column(i).into_owned();
            let proj = qi.dotc(&q.column(j));
            let mut col = q.column_mut(j);
            col -= qi * proj;
        }
        let n = q.column(j).norm();
        q.column_mut(j).unscale_mut(n);
    }
    q
}

/// Orthonormal `Θ` of rank `m` in `C^l`.
pub fn random_orthonormal_pair(r: &mut ChaCha8Rng, l: usize, m: usize) -> SubspacePair {
    let theta = orthonormal_columns(&random_cmat(r, l, m));
    SubspacePair::from_theta(theta).unwrap()
}

/// Connected random graph: a random spanning tree plus extra edges.
pub fn random_topology(r: &mut ChaCha8Rng, n: usize) -> NetworkTopology {
    let mut edges = Vec::new();
    for k in 1..n {
        edges.push((r.random_range(0..k), k));
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < 0.3 && !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    network::build_topology(n, &edges).unwrap()
}

pub fn random_doubly_stochastic(r: &mut ChaCha8Rng, n: usize) -> CombinationMatrix {
    network::metropolis_combination(&random_topology(r, n))
}

pub fn random_environments(r: &mut ChaCha8Rng, n: usize, l: usize, optima: &[CVec]) -> Vec<AgentEnvironment> {
    (0..n)
        .map(|k| {
            let cov = random_pd(r, l, 0.2);
            let sz = 0.05 + 0.1 * r.random::<f64>();
            AgentEnvironment::new(cov, sz, optima[k].clone(), 1.0).unwrap()
        })
        .collect()
}

/// A random small cooperative model with its ingredients.
pub struct Toy {
    pub n: usize,
    pub l: usize,
    pub variant: Variant,
    pub mu: f64,
    pub eta2: f64,
    pub a: CombinationMatrix,
    pub pair: SubspacePair,
    pub envs: Vec<AgentEnvironment>,
    pub optima: Vec<CVec>,
}

impl Toy {
    pub fn random(r: &mut ChaCha8Rng, n: usize, l: usize, variant: Variant) -> Self {
        let m = r.random_range(1..=l);
        let pair = if variant == Variant::Alg1 && r.random::<bool>() {
            SubspacePair::from_theta(random_cmat(r, l, m)).unwrap()
        } else {
            random_orthonormal_pair(r, l, m)
        };
        let a = random_doubly_stochastic(r, n);
        let optima: Vec<CVec> = (0..n).map(|_| random_cvec(r, l, 1.0)).collect();
        let envs = random_environments(r, n, l, &optima);
        let eta2 = if variant == Variant::Alg2 { 0.5 * r.random::<f64>() } else { 0.0 };
        let mut toy = Self { n, l, variant, mu: 0.05 + 0.1 * r.random::<f64>(), eta2, a, pair, envs, optima };
        while toy.model().spectral_radius().unwrap() >= 0.999 {
            toy.mu *= 0.5;
        }
        toy
    }

    pub fn w_opt(&self) -> CVec {
        theory::stack(&self.optima)
    }

    pub fn model(&self) -> TheoreticalModel {
        theory::build_model(self.variant, &self.a, &self.pair, &self.envs, self.mu, self.eta2, &self.w_opt()).unwrap()
    }
}

/// One step of the expected weight-error map `v ↦ E{v'}` with the data term
/// replaced by its expectation, written agent by agent.
pub fn expected_error_step(t: &Toy, v: &CVec) -> CVec {
    let (n, l) = (t.n, t.l);
    let w: Vec<CVec> = (0..n).map(|k| &t.optima[k] - v.rows(k * l, l)).collect();
    let eye = linalg::identity(l);
    let psi: Vec<CVec> = (0..n)
        .map(|k| {
            let grad = t.envs[k].covariance() * (&t.optima[k] - &w[k]);
            match t.variant {
                Variant::Alg1 => &w[k] + t.pair.s_theta() * grad * c(t.mu, 0.0),
                Variant::Alg1IdentityS => &w[k] + grad * c(t.mu, 0.0),
                Variant::Alg2 => (&eye - t.pair.p_theta_perp().scale(t.mu * t.eta2)) * &w[k] + grad * c(t.mu, 0.0),
                other => panic!("no expected map for {other}"),
            }
        })
        .collect();
    let mut out = CVec::zeros(n * l);
    for k in 0..n {
        let mut agg = CVec::zeros(l);
        for j in 0..n {
            agg += &psi[j] * c(t.a.weight(j, k), 0.0);
        }
        let wk = t.pair.p_theta() * agg + t.pair.p_theta_perp() * &psi[k];
        out.rows_mut(k * l, l).copy_from(&(&t.optima[k] - wk));
    }
    out
}

/// `(B, r)` of the affine map `v ↦ B v − r`, read off column by column.
pub fn affine_from_expected_step(t: &Toy) -> (CMat, CVec) {
    let nl = t.n * t.l;
    let r = -expected_error_step(t, &CVec::zeros(nl));
    let mut b = CMat::zeros(nl, nl);
    for j in 0..nl {
        let mut e = CVec::zeros(nl);
        e[j] = c(1.0, 0.0);
        let col = expected_error_step(t, &e) + &r;
        b.set_column(j, &col);
    }
    (b, r)
}

/// Column-major `vec`.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_iterator(m.len(), m.iter().copied())
}

pub fn mat_of(v: &CVec, n: usize) -> CMat {
    CMat::from_iterator(n, n, v.iter().copied())
}

/// Dense Kronecker product, written out entry by entry.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `lim ‖Mᵏ‖^{1/k}` evaluated at `k = 2⁶⁰` by normalized repeated squaring.
pub fn power_radius(m: &CMat) -> f64 {
    let mut p = m.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..60 {
        let s = p.norm();
        if s == 0.0 {
            return 0.0;
        }
        p.unscale_mut(s);
        log_scale += s.ln();
        p = &p * &p;
        log_scale *= 2.0;
        k *= 2.0;
    }
    ((log_scale + p.norm().ln()) / k).exp()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    linalg::max_abs(&(a - b))
}

pub fn real_matrix(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Every iterate `w_n`, `n = 0..=n_iter`, of one run.
pub fn trajectory(
    config: &subdiff::algorithms::AlgorithmConfig,
    envs: &[AgentEnvironment],
    run_seed: u64,
    n_iter: usize,
) -> Vec<Vec<CVec>> {
    use subdiff::algorithms::{run_adaptive, RecordMode};
    let rec = run_adaptive(config, envs, n_iter, run_seed, None, RecordMode::WeightTrajectory { every: 1 }).unwrap();
    rec.trajectory.unwrap().into_iter().map(|(_, w)| w).collect()
}

/// Plain ATC diffusion LMS over the crate's measurement streams:
/// `ψ_k = w_k + μ x_k*(d_k − x_k w_k)`, `w_k = Σ_ℓ a_{ℓk} ψ_ℓ`.
pub fn reference_atc(a: &CombinationMatrix, envs: &[AgentEnvironment], mu: f64, run_seed: u64, n_iter: usize) -> Vec<Vec<CVec>> {
    use subdiff::algorithms::{GaussianSource, Measurement, MeasurementSource};
    let (n, l) = (envs.len(), envs[0].dim());
    let mut source = GaussianSource::new(envs, run_seed, None);
    let mut meas = vec![Measurement { d: c(0.0, 0.0), x: CVec::zeros(l) }; n];
    let mut w = vec![CVec::zeros(l); n];
    let mut out = vec![w.clone()];
    for _ in 0..n_iter {
        source.fill(&mut meas);
        let psi: Vec<CVec> = (0..n)
            .map(|k| {
                let x = &meas[k].x;
                let e = meas[k].d - (0..l).map(|i| x[i] * w[k][i]).sum::<Complex64>();
                CVec::from_fn(l, |i, _| w[k][i] + x[i].conj() * e * mu)
            })
            .collect();
        w = (0..n)
            .map(|k| {
                let mut acc = CVec::zeros(l);
                for (j, p) in psi.iter().enumerate() {
                    acc += p * c(a.weight(j, k), 0.0);
                }
                acc
            })
            .collect();
        out.push(w.clone());
    }
    out
}

pub fn max_trajectory_gap(a: &[Vec<CVec>], b: &[Vec<CVec>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| linalg::max_abs_vec(&(u - v))))
        .fold(0.0, f64::max)
}
