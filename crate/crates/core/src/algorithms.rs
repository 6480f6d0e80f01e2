//! Online adaptive strategies: subspace-constrained ATC diffusion LMS
//! (general `S_Θ` or `S = I`), the norm-bounded leaky variant, and the
//! non-cooperative LMS / leaky-LMS baselines.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{self, AgentEnvironment};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::network::CombinationMatrix;
use crate::rng;
use crate::subspace::SubspacePair;

/// Any weight magnitude above this marks the run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Subspace-constrained diffusion LMS with `S = S_Θ`.
    Alg1,
    /// Subspace-constrained diffusion LMS with `S = I_L`.
    Alg1IdentityS,
    /// Norm-bounded variant with leakage `μη₂P_Θ⊥`.
    Alg2,
    NoncoopLms,
    NoncoopLeaky,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Alg1,
        Variant::Alg1IdentityS,
        Variant::Alg2,
        Variant::NoncoopLms,
        Variant::NoncoopLeaky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Alg1 => "alg1",
            Variant::Alg1IdentityS => "alg1_identity_s",
            Variant::Alg2 => "alg2",
            Variant::NoncoopLms => "noncoop_lms",
            Variant::NoncoopLeaky => "noncoop_leaky",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant {name:?}")))
    }

    pub fn is_cooperative(self) -> bool {
        matches!(self, Variant::Alg1 | Variant::Alg1IdentityS | Variant::Alg2)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One fully specified adaptive strategy.
#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    pub step_size: f64,
    pub eta2: f64,
    pub combination: CombinationMatrix,
    pub pair: SubspacePair,
}

impl AlgorithmConfig {
    pub fn new(
        variant: Variant,
        step_size: f64,
        eta2: f64,
        combination: CombinationMatrix,
        pair: SubspacePair,
    ) -> Result<Self> {
        // μ = 0 is accepted as the frozen-weights limit
        if !(step_size >= 0.0) || !step_size.is_finite() {
            return Err(Error::InvalidInput(format!("step size must be a finite μ >= 0, got {step_size}")));
        }
        if !(eta2 >= 0.0) || !eta2.is_finite() {
            return Err(Error::InvalidInput(format!("η₂ must be a finite value >= 0, got {eta2}")));
        }
        Ok(Self { variant, step_size, eta2, combination, pair })
    }

    pub fn n_agents(&self) -> usize {
        self.combination.n_agents()
    }

    pub fn dim(&self) -> usize {
        self.pair.dim()
    }
}

/// Weights `w_{k,n}` and intermediates `ψ_{k,n}` of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub weights: Vec<CVec>,
    pub intermediates: Vec<CVec>,
    pub iteration: usize,
}

impl NetworkState {
    pub fn zeros(n_agents: usize, dim: usize) -> Self {
        Self {
            weights: vec![CVec::zeros(dim); n_agents],
            intermediates: vec![CVec::zeros(dim); n_agents],
            iteration: 0,
        }
    }

    /// `(1/N) Σ_k ‖w_k^o − w_k‖²`.
    pub fn msd(&self, optima: &[CVec]) -> f64 {
        let n = self.weights.len() as f64;
        self.weights
            .iter()
            .zip(optima)
            .map(|(w, wo)| (wo - w).norm_squared())
            .sum::<f64>()
            / n
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .fold(0.0_f64, |acc, z| if z.norm().is_nan() { f64::INFINITY } else { acc.max(z.norm()) })
    }
}

/// One scalar/regressor pair. `x` holds the entries of the row `x_{k,n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub d: Complex64,
    pub x: CVec,
}

/// Weight-drift disturbance: a dead regressor tap and additive noise after
/// the combination step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    /// `(agent, tap)`, zero-based.
    pub dead_tap: Option<(usize, usize)>,
    pub combination_noise_mean: f64,
    pub combination_noise_stddev: f64,
}

impl DisturbanceSpec {
    fn validate(&self, n_agents: usize, dim: usize) -> Result<()> {
        if let Some((k, t)) = self.dead_tap {
            if k >= n_agents || t >= dim {
                return Err(Error::InvalidInput(format!(
                    "dead tap ({k}, {t}) out of range for N={n_agents}, L={dim}"
                )));
            }
        }
        if !(self.combination_noise_stddev >= 0.0) || !self.combination_noise_mean.is_finite() {
            return Err(Error::InvalidInput("disturbance mean must be finite and stddev >= 0".into()));
        }
        Ok(())
    }

    fn has_noise(&self) -> bool {
        self.combination_noise_mean != 0.0 || self.combination_noise_stddev != 0.0
    }
}

fn check_measurements(meas: &[Measurement], n: usize, l: usize) -> Result<()> {
    if meas.len() != n {
        return Err(Error::DimensionMismatch(format!("{} measurements for {n} agents", meas.len())));
    }
    if let Some(m) = meas.iter().find(|m| m.x.len() != l) {
        return Err(Error::DimensionMismatch(format!("regressor of length {}, expected {l}", m.x.len())));
    }
    Ok(())
}

fn check_state(state: &NetworkState, config: &AlgorithmConfig) -> Result<()> {
    let (n, l) = (config.n_agents(), config.dim());
    if state.weights.len() != n || state.weights.iter().any(|w| w.len() != l) {
        return Err(Error::DimensionMismatch(format!("state does not match N={n}, L={l}")));
    }
    Ok(())
}

/// How the LMS correction enters the intermediate estimate.
#[derive(Clone, Copy)]
enum Adapt<'a> {
    /// `ψ = w + g`
    Plain,
    /// `ψ = w + S g`
    Scaled(&'a CMat),
    /// `ψ = Λ w + g`
    Leaky(&'a CMat),
}

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Writes `ψ` for one agent; `g` is scratch for `μ x* (d − x w)`.
fn adapt_into(kind: Adapt, w: &CVec, m: &Measurement, mu: f64, g: &mut CVec, psi: &mut CVec) {
    let e = (m.d - m.x.dot(w)) * mu;
    for (gi, xi) in g.iter_mut().zip(m.x.iter()) {
        *gi = xi.conj() * e;
    }
    match kind {
        Adapt::Plain => {
            psi.copy_from(w);
            *psi += &*g;
        }
        Adapt::Scaled(s) => {
            psi.copy_from(w);
            psi.gemv(ONE, s, g, ONE);
        }
        Adapt::Leaky(leak) => {
            psi.copy_from(g);
            psi.gemv(ONE, leak, w, ONE);
        }
    }
}

fn adapt_all(kind: Adapt, weights: &[CVec], meas: &[Measurement], mu: f64) -> Vec<CVec> {
    let l = weights.first().map_or(0, |w| w.len());
    let mut g = CVec::zeros(l);
    weights
        .iter()
        .zip(meas)
        .map(|(w, m)| {
            let mut psi = CVec::zeros(l);
            adapt_into(kind, w, m, mu, &mut g, &mut psi);
            psi
        })
        .collect()
}

/// `ψ_k = w_k + μ S x_k* (d_k − x_k w_k)`, `S = S_Θ` or `I`.
pub fn adapt_step_alg1(state: &NetworkState, meas: &[Measurement], config: &AlgorithmConfig) -> Result<Vec<CVec>> {
    check_state(state, config)?;
    check_measurements(meas, config.n_agents(), config.dim())?;
    let kind = match config.variant {
        Variant::Alg1 => Adapt::Scaled(config.pair.s_theta()),
        Variant::Alg1IdentityS => Adapt::Plain,
        other => return Err(Error::InvalidInput(format!("adapt_step_alg1 called with variant {other}"))),
    };
    Ok(adapt_all(kind, &state.weights, meas, config.step_size))
}

fn leak_matrix(config: &AlgorithmConfig, projector: &CMat) -> CMat {
    let l = config.dim();
    CMat::identity(l, l) - projector.scale(config.step_size * config.eta2)
}

/// `ψ_k = (I − μη₂P_Θ⊥) w_k + μ x_k* (d_k − x_k w_k)`.
pub fn adapt_step_alg2(state: &NetworkState, meas: &[Measurement], config: &AlgorithmConfig) -> Result<Vec<CVec>> {
    check_state(state, config)?;
    check_measurements(meas, config.n_agents(), config.dim())?;
    if config.variant != Variant::Alg2 {
        return Err(Error::InvalidInput(format!("adapt_step_alg2 called with variant {}", config.variant)));
    }
    let leak = leak_matrix(config, config.pair.p_theta_perp());
    Ok(adapt_all(Adapt::Leaky(&leak), &state.weights, meas, config.step_size))
}

/// Non-cooperative LMS, or leaky LMS `(1 − μη₂) w + μ x*(d − x w)`.
pub fn noncoop_step(state: &NetworkState, meas: &[Measurement], config: &AlgorithmConfig) -> Result<Vec<CVec>> {
    check_state(state, config)?;
    check_measurements(meas, config.n_agents(), config.dim())?;
    match config.variant {
        Variant::NoncoopLms => Ok(adapt_all(Adapt::Plain, &state.weights, meas, config.step_size)),
        Variant::NoncoopLeaky => {
            let leak = leak_matrix(config, &CMat::identity(config.dim(), config.dim()));
            Ok(adapt_all(Adapt::Leaky(&leak), &state.weights, meas, config.step_size))
        }
        other => Err(Error::InvalidInput(format!("noncoop_step called with variant {other}"))),
    }
}

/// Non-zero combination weights `(ℓ, a_{ℓk})` for each agent `k`.
fn neighbor_weights(a: &CombinationMatrix) -> Vec<Vec<(usize, f64)>> {
    let n = a.n_agents();
    (0..n)
        .map(|k| (0..n).filter(|&l| a.weight(l, k) != 0.0).map(|l| (l, a.weight(l, k))).collect())
        .collect()
}

/// Writes `w_k = ψ_k + P_Θ (Σ_ℓ a_{ℓk} ψ_ℓ − ψ_k)`; `agg` is scratch.
fn combine_into(psi: &[CVec], nb: &[(usize, f64)], k: usize, pair: &SubspacePair, agg: &mut CVec, out: &mut CVec) {
    agg.copy_from(&psi[k]);
    agg.neg_mut();
    for &(j, a) in nb {
        agg.axpy(Complex64::new(a, 0.0), &psi[j], ONE);
    }
    out.copy_from(&psi[k]);
    out.gemv(ONE, pair.p_theta(), agg, ONE);
}

/// `w_k = Σ_ℓ a_{ℓk} P_Θ ψ_ℓ + P_Θ⊥ ψ_k`.
pub fn combine_step_subspace(psi: &[CVec], config: &AlgorithmConfig) -> Result<Vec<CVec>> {
    let (n, l) = (config.n_agents(), config.dim());
    if psi.len() != n || psi.iter().any(|p| p.len() != l) {
        return Err(Error::DimensionMismatch(format!("intermediates do not match N={n}, L={l}")));
    }
    let neighbors = neighbor_weights(&config.combination);
    let mut agg = CVec::zeros(l);
    Ok((0..n)
        .map(|k| {
            let mut w = CVec::zeros(l);
            combine_into(psi, &neighbors[k], k, &config.pair, &mut agg, &mut w);
            w
        })
        .collect())
}

/// Precomputed operators and scratch space for repeated stepping.
struct Stepper<'a> {
    config: &'a AlgorithmConfig,
    neighbors: Vec<Vec<(usize, f64)>>,
    leak: Option<CMat>,
    g: CVec,
    agg: CVec,
}

impl<'a> Stepper<'a> {
    fn new(config: &'a AlgorithmConfig) -> Self {
        let leak = match config.variant {
            Variant::Alg2 => Some(leak_matrix(config, config.pair.p_theta_perp())),
            Variant::NoncoopLeaky => Some(leak_matrix(config, &CMat::identity(config.dim(), config.dim()))),
            _ => None,
        };
        let l = config.dim();
        Self { config, neighbors: neighbor_weights(&config.combination), leak, g: CVec::zeros(l), agg: CVec::zeros(l) }
    }

    fn step(&mut self, state: &mut NetworkState, meas: &[Measurement]) {
        let mu = self.config.step_size;
        let kind = match (self.config.variant, &self.leak) {
            (Variant::Alg1, _) => Adapt::Scaled(self.config.pair.s_theta()),
            (Variant::Alg2 | Variant::NoncoopLeaky, Some(leak)) => Adapt::Leaky(leak),
            _ => Adapt::Plain,
        };
        for ((w, m), psi) in state.weights.iter().zip(meas).zip(state.intermediates.iter_mut()) {
            adapt_into(kind, w, m, mu, &mut self.g, psi);
        }
        if self.config.variant.is_cooperative() {
            for (k, w) in state.weights.iter_mut().enumerate() {
                combine_into(&state.intermediates, &self.neighbors[k], k, &self.config.pair, &mut self.agg, w);
            }
        } else {
            state.weights.clone_from(&state.intermediates);
        }
        state.iteration += 1;
    }
}

/// Advances `state` by one synchronous adapt-then-combine iteration.
pub fn step(state: &mut NetworkState, meas: &[Measurement], config: &AlgorithmConfig) -> Result<()> {
    check_state(state, config)?;
    check_measurements(meas, config.n_agents(), config.dim())?;
    Stepper::new(config).step(state, meas);
    Ok(())
}

/// Source of per-iteration measurements for every agent of one run.
pub trait MeasurementSource {
    fn fill(&mut self, out: &mut [Measurement]);
}

/// Draws from [`datamodel::emit_measurement_into`] with one stream per agent,
/// applying a dead tap if requested.
pub struct GaussianSource<'a, R> {
    envs: &'a [AgentEnvironment],
    streams: Vec<R>,
    dead_tap: Option<(usize, usize)>,
}

impl<'a> GaussianSource<'a, rand_chacha::ChaCha8Rng> {
    pub fn new(envs: &'a [AgentEnvironment], run_seed: u64, dead_tap: Option<(usize, usize)>) -> Self {
        let streams = (0..envs.len()).map(|k| rng::agent_stream(run_seed, k)).collect();
        Self { envs, streams, dead_tap }
    }
}

impl<R: Rng> MeasurementSource for GaussianSource<'_, R> {
    fn fill(&mut self, out: &mut [Measurement]) {
        for (k, ((env, r), m)) in self.envs.iter().zip(&mut self.streams).zip(out.iter_mut()).enumerate() {
            m.d = datamodel::emit_measurement_into(env, r, &mut m.x);
            if let Some((agent, tap)) = self.dead_tap {
                if agent == k {
                    // the failed tap reads zero and contributes nothing to d
                    m.d -= m.x[tap] * env.w_opt()[tap];
                    m.x[tap] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    MsdOnly,
    /// Keep a snapshot of all weights every `every` iterations (and at 0).
    WeightTrajectory { every: usize },
}

/// Output of one adaptive run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// `msd[n]` for `n = 0..=n_iterations` (shorter if diverged).
    pub msd: Vec<f64>,
    pub trajectory: Option<Vec<(usize, Vec<CVec>)>>,
    pub diverged_at: Option<usize>,
    pub final_weights: Vec<CVec>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Runs `n_iterations` synchronous iterations from `w = 0`, calling
/// `observe(n, weights)` for `n = 0..=n_iterations`. Returns the divergence
/// iteration, if any; iteration stops there.
pub fn run_with_observer<S: MeasurementSource>(
    config: &AlgorithmConfig,
    source: &mut S,
    n_iterations: usize,
    disturbance: Option<&DisturbanceSpec>,
    run_seed: u64,
    mut observe: impl FnMut(usize, &[CVec]),
) -> Result<Option<usize>> {
    let (n, l) = (config.n_agents(), config.dim());
    if let Some(d) = disturbance {
        d.validate(n, l)?;
    }
    let mut stepper = Stepper::new(config);
    let mut state = NetworkState::zeros(n, l);
    let mut meas = vec![Measurement { d: Complex64::new(0.0, 0.0), x: CVec::zeros(l) }; n];
    let noise = disturbance.filter(|d| d.has_noise());
    let mut dist_rng = rng::disturbance_stream(run_seed);
    observe(0, &state.weights);
    for it in 1..=n_iterations {
        source.fill(&mut meas);
        stepper.step(&mut state, &meas);
        if let Some(d) = noise {
            for w in &mut state.weights {
                for z in w.iter_mut() {
                    z.re += d.combination_noise_mean + d.combination_noise_stddev * rng::normal(&mut dist_rng);
                }
            }
        }
        if !(state.max_abs_weight() <= DIVERGENCE_THRESHOLD) {
            return Ok(Some(it));
        }
        observe(it, &state.weights);
    }
    Ok(None)
}

/// Runs one realization with Gaussian data drawn from `environments`.
pub fn run_adaptive(
    config: &AlgorithmConfig,
    environments: &[AgentEnvironment],
    n_iterations: usize,
    run_seed: u64,
    disturbance: Option<&DisturbanceSpec>,
    record: RecordMode,
) -> Result<RunRecord> {
    if environments.len() != config.n_agents() {
        return Err(Error::DimensionMismatch(format!(
            "{} environments for {} agents",
            environments.len(),
            config.n_agents()
        )));
    }
    if let Some(e) = environments.iter().find(|e| e.dim() != config.dim()) {
        return Err(Error::DimensionMismatch(format!("environment of dimension {}, expected {}", e.dim(), config.dim())));
    }
    if n_iterations == 0 {
        return Err(Error::InvalidInput("n_iterations must be >= 1".into()));
    }
    let optima: Vec<CVec> = environments.iter().map(|e| e.w_opt().clone()).collect();
    let mut source = GaussianSource::new(environments, run_seed, disturbance.and_then(|d| d.dead_tap));
    run_record(config, &mut source, &optima, n_iterations, run_seed, disturbance, record)
}

/// Like [`run_adaptive`] with an arbitrary measurement source.
pub fn run_record<S: MeasurementSource>(
    config: &AlgorithmConfig,
    source: &mut S,
    optima: &[CVec],
    n_iterations: usize,
    run_seed: u64,
    disturbance: Option<&DisturbanceSpec>,
    record: RecordMode,
) -> Result<RunRecord> {
    let mut msd = Vec::with_capacity(n_iterations + 1);
    let mut trajectory = match record {
        RecordMode::MsdOnly => None,
        RecordMode::WeightTrajectory { every } if every == 0 => {
            return Err(Error::InvalidInput("trajectory stride must be >= 1".into()))
        }
        RecordMode::WeightTrajectory { .. } => Some(Vec::new()),
    };
    let mut final_weights = Vec::new();
    let diverged_at = run_with_observer(config, source, n_iterations, disturbance, run_seed, |it, w| {
        let n = w.len() as f64;
        msd.push(w.iter().zip(optima).map(|(w, wo)| (wo - w).norm_squared()).sum::<f64>() / n);
        if let (Some(t), RecordMode::WeightTrajectory { every }) = (&mut trajectory, record) {
            if it % every == 0 || it == n_iterations {
                t.push((it, w.to_vec()));
            }
        }
        if it == n_iterations {
            final_weights = w.to_vec();
        }
    })?;
    Ok(RunRecord { msd, trajectory, diverged_at, final_weights })
}

/// Writes a trajectory as CSV with columns `iteration,agent,tap,real,imag`.
pub fn write_trajectory_csv<W: Write + ?Sized>(out: &mut W, trajectory: &[(usize, Vec<CVec>)]) -> Result<()> {
    writeln!(out, "iteration,agent,tap,real,imag")?;
    for (it, weights) in trajectory {
        for (k, w) in weights.iter().enumerate() {
            for (t, z) in w.iter().enumerate() {
                writeln!(out, "{it},{k},{t},{:e},{:e}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}
