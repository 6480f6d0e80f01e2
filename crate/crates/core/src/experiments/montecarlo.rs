//! Monte Carlo harness: independent runs in parallel, reduced in run order so
//! results do not depend on the degree of parallelism.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{self, AlgorithmConfig, GaussianSource, RecordMode, Variant};
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::network::uniform_combination;
use crate::rng;
use crate::theory::{CurveKind, MSDCurve};

use super::config::Experiment;
use super::localization::{LocalizationScenario, LocalizationSource};

/// Simulated curve plus divergence bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub curve: MSDCurve,
    pub n_runs: usize,
    pub diverged_runs: Vec<usize>,
}

impl MonteCarloResult {
    pub fn n_diverged(&self) -> usize {
        self.diverged_runs.len()
    }
}

/// Evaluates `f(run)` for `run = 0..n_runs` in parallel; output is in run order.
pub fn run_many<T: Send>(n_runs: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n_runs).into_par_iter().map(f).collect()
}

/// Runs every Monte Carlo realization of `exp` with a per-run observer state.
/// Returns `(state, diverged_at)` per run, in run order.
pub fn observe_runs<T: Send>(
    exp: &Experiment,
    n_runs: usize,
    n_iterations: usize,
    init: impl Fn(usize) -> T + Sync + Send,
    observe: impl Fn(&mut T, usize, &[CVec]) + Sync + Send,
) -> Result<Vec<(T, Option<usize>)>> {
    let dead_tap = exp.disturbance.as_ref().and_then(|d| d.dead_tap);
    run_many(n_runs, |run| {
        let seed = exp.run_seed(run);
        let mut source = GaussianSource::new(&exp.environments, seed, dead_tap);
        let mut state = init(run);
        let diverged = algorithms::run_with_observer(
            &exp.algorithm,
            &mut source,
            n_iterations,
            exp.disturbance.as_ref(),
            seed,
            |it, w| observe(&mut state, it, w),
        )?;
        Ok((state, diverged))
    })
    .into_iter()
    .collect()
}

/// Per-iteration mean over the non-diverged runs, plus the diverged run indices.
fn mean_records(records: Vec<(Vec<f64>, Option<usize>)>, n_iterations: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let n_runs = records.len();
    let mut sum = vec![0.0; n_iterations + 1];
    let mut diverged_runs = Vec::new();
    for (run, (values, diverged)) in records.into_iter().enumerate() {
        if diverged.is_some() {
            diverged_runs.push(run);
            continue;
        }
        for (s, v) in sum.iter_mut().zip(values) {
            *s += v;
        }
    }
    let valid = n_runs - diverged_runs.len();
    if valid == 0 {
        return Err(Error::AllRunsDiverged { n_runs });
    }
    Ok((sum.into_iter().map(|s| s / valid as f64).collect(), diverged_runs))
}

fn average_records(records: Vec<(Vec<f64>, Option<usize>)>, n_iterations: usize, meta: String) -> Result<MonteCarloResult> {
    let n_runs = records.len();
    let (mean, diverged_runs) = mean_records(records, n_iterations)?;
    let meta = format!("{meta} runs={n_runs} diverged={}", diverged_runs.len());
    Ok(MonteCarloResult { curve: MSDCurve::from_linear(&mean, CurveKind::Simulated, meta), n_runs, diverged_runs })
}

/// Network MSD averaged over `config.n_runs` runs of `config.n_iterations`.
pub fn monte_carlo_msd(exp: &Experiment) -> Result<MonteCarloResult> {
    monte_carlo_msd_with(exp, exp.config.n_runs, exp.config.n_iterations)
}

pub fn monte_carlo_msd_with(exp: &Experiment, n_runs: usize, n_iterations: usize) -> Result<MonteCarloResult> {
    if n_runs == 0 || n_iterations == 0 {
        return Err(Error::InvalidInput("n_runs and n_iterations must be >= 1".into()));
    }
    let optima = exp.optima();
    let n = optima.len() as f64;
    let records = observe_runs(
        exp,
        n_runs,
        n_iterations,
        |_| Vec::with_capacity(n_iterations + 1),
        |msd: &mut Vec<f64>, _, w| {
            msd.push(w.iter().zip(&optima).map(|(w, wo)| (wo - w).norm_squared()).sum::<f64>() / n);
        },
    )?;
    average_records(records, n_iterations, format!("simulated {}", exp.algorithm.variant))
}

/// Run-averaged `|w_{agent,n}[tap]|` for `n = 0..=n_iterations`, over the
/// non-diverged runs.
pub fn tap_magnitude(exp: &Experiment, agent: usize, tap: usize, n_runs: usize, n_iterations: usize) -> Result<Vec<f64>> {
    if agent >= exp.n_agents() || tap >= exp.algorithm.dim() {
        return Err(Error::InvalidInput(format!("no tap {tap} at agent {agent}")));
    }
    if n_runs == 0 || n_iterations == 0 {
        return Err(Error::InvalidInput("n_runs and n_iterations must be >= 1".into()));
    }
    let records = observe_runs(
        exp,
        n_runs,
        n_iterations,
        |_| Vec::with_capacity(n_iterations + 1),
        |mags: &mut Vec<f64>, _, w| mags.push(w[agent][tap].norm()),
    )?;
    Ok(mean_records(records, n_iterations)?.0)
}

/// Outcome of a localization study for one strategy.
#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub variant: Variant,
    pub monte_carlo: MonteCarloResult,
    /// Final estimates of run 0, one per agent.
    pub estimates: Vec<Vector3<f64>>,
    /// Mean distance of `estimates` to the true target line.
    pub mean_line_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub agent: usize,
    pub target: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LocalizationResult {
    pub fn estimate_rows(&self, scenario: &LocalizationScenario) -> Vec<EstimateRow> {
        self.estimates
            .iter()
            .enumerate()
            .map(|(k, e)| EstimateRow { agent: k, target: scenario.assignment[k], x: e[0], y: e[1], z: e[2] })
            .collect()
    }
}

/// Runs `variant` on the localization scenario with uniform combination.
pub fn run_localization(
    variant: Variant,
    scenario: &LocalizationScenario,
    mu: f64,
    n_iterations: usize,
    n_runs: usize,
    master_seed: u64,
) -> Result<LocalizationResult> {
    if n_runs == 0 || n_iterations == 0 {
        return Err(Error::InvalidInput("n_runs and n_iterations must be >= 1".into()));
    }
    let config = AlgorithmConfig::new(variant, mu, 0.0, uniform_combination(&scenario.topology), scenario.pair.clone())?;
    let optima = scenario.optima();
    let records: Vec<Result<algorithms::RunRecord>> = run_many(n_runs, |run| {
        let seed = rng::run_seed(master_seed, run as u64);
        let mut source = LocalizationSource::new(scenario, seed);
        algorithms::run_record(&config, &mut source, &optima, n_iterations, seed, None, RecordMode::MsdOnly)
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let estimates: Vec<Vector3<f64>> = records[0]
        .final_weights
        .iter()
        .map(|w| Vector3::new(w[0].re, w[1].re, w[2].re))
        .collect();
    let mean_line_distance = if estimates.is_empty() {
        f64::NAN
    } else {
        estimates.iter().map(|e| scenario.distance_to_line(e)).sum::<f64>() / estimates.len() as f64
    };
    let monte_carlo = average_records(
        records.into_iter().map(|r| (r.msd, r.diverged_at)).collect(),
        n_iterations,
        format!("localization {variant}"),
    )?;
    Ok(LocalizationResult { variant, monte_carlo, estimates, mean_line_distance })
}
