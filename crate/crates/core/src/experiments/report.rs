//! Predictions, side-by-side comparisons and certificate reports.

use std::io::Write;

use serde::Serialize;

use crate::algorithms::Variant;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::subspace::{lemma1_certificate, lemma2_certificate};
use crate::theory::{self, MSDCurve, SteadyState, TheoreticalModel};

use super::config::Experiment;

/// Fraction of iterations treated as steady state.
pub const TAIL_FRACTION: f64 = 0.1;

pub fn model_for(exp: &Experiment) -> Result<TheoreticalModel> {
    let a = &exp.algorithm;
    theory::build_model_with(
        a.variant,
        &a.combination,
        &a.pair,
        &exp.environments,
        a.step_size,
        a.eta2,
        &theory::stack(&exp.optima()),
        exp.config.theory.noise_form,
    )
}

/// Transient curve from `w = 0` and steady-state MSD.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub curve: MSDCurve,
    pub steady_state: SteadyState,
    pub spectral_radius: f64,
}

pub fn predict(exp: &Experiment) -> Result<Prediction> {
    let model = model_for(exp)?;
    let v0 = theory::stack(&exp.optima());
    let curve = theory::transient_msd(&model, &v0, exp.config.n_iterations)?;
    let steady_state = theory::steady_state_msd(&model)?;
    Ok(Prediction { curve, steady_state, spectral_radius: model.spectral_radius()? })
}

/// Summary of one curve in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub name: String,
    pub tail_msd_db: f64,
    /// First iteration at which the curve is within 3 dB of its tail average.
    pub crossing_iteration: Option<usize>,
}

pub fn summarize(name: &str, curve: &MSDCurve) -> CurveSummary {
    let tail = curve.tail_average_db(TAIL_FRACTION);
    let crossing_iteration = curve.values_db.iter().position(|&v| v <= tail + 3.0);
    CurveSummary { name: name.to_string(), tail_msd_db: tail, crossing_iteration }
}

/// Aligned curves with per-curve summaries.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub names: Vec<String>,
    pub curves: Vec<MSDCurve>,
    pub summaries: Vec<CurveSummary>,
}

pub fn compare_runs(named: Vec<(String, MSDCurve)>) -> Result<Comparison> {
    let Some(len) = named.first().map(|(_, c)| c.len()) else {
        return Err(Error::InvalidInput("nothing to compare".into()));
    };
    if let Some((name, c)) = named.iter().find(|(_, c)| c.len() != len) {
        return Err(Error::InvalidInput(format!("curve {name:?} has {} points, expected {len}", c.len())));
    }
    let summaries = named.iter().map(|(n, c)| summarize(n, c)).collect();
    let (names, curves) = named.into_iter().unzip();
    Ok(Comparison { names, curves, summaries })
}

impl Comparison {
    /// CSV with an `iteration` column and one `msd_db` column per curve.
    pub fn write_table_csv<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        write!(out, "iteration")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for i in 0..self.curves.first().map_or(0, |c| c.len()) {
            write!(out, "{i}")?;
            for c in &self.curves {
                write!(out, ",{}", c.values_db[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// CSV with columns `name,tail_msd_db,crossing_iteration`.
    pub fn write_summary_csv<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "name,tail_msd_db,crossing_iteration")?;
        for s in &self.summaries {
            let crossing = s.crossing_iteration.map_or(String::new(), |c| c.to_string());
            writeln!(out, "{},{},{crossing}", s.name, s.tail_msd_db)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateSummary {
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

/// Uniqueness certificates and stability diagnostics for a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyReport {
    pub variant: Variant,
    pub step_size: f64,
    pub eta2: f64,
    pub subspace_orthonormal: bool,
    pub lemma1: CertificateSummary,
    /// Evaluated at the configured `η₂`, or absent when `η₂ = 0`.
    pub lemma2: Option<CertificateSummary>,
    pub step_size_bound: f64,
    pub bound_guaranteed: bool,
    pub step_size_within_bound: bool,
    /// `ρ(B)`; absent when no model applies (non-cooperative variants or
    /// networks beyond the dense-model size limit).
    pub spectral_radius: Option<f64>,
    pub mean_stable: Option<bool>,
}

pub fn certify(exp: &Experiment) -> Result<CertifyReport> {
    let a = &exp.algorithm;
    let covs: Vec<CMat> = exp.environments.iter().map(|e| e.covariance().clone()).collect();
    let l1 = lemma1_certificate(&a.pair, &covs)?;
    let lemma2 = if a.eta2 > 0.0 {
        let l2 = lemma2_certificate(a.pair.theta(), &covs, a.eta2)?;
        Some(CertificateSummary { min_eigenvalue: l2.min_eigenvalue, positive_definite: l2.positive_definite })
    } else {
        None
    };
    let bound = theory::step_size_bound(a.variant, &exp.environments, a.eta2, &a.pair)?;
    let spectral_radius = match model_for(exp) {
        Ok(m) => Some(m.spectral_radius()?),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(CertifyReport {
        variant: a.variant,
        step_size: a.step_size,
        eta2: a.eta2,
        subspace_orthonormal: a.pair.is_orthonormal(),
        lemma1: CertificateSummary { min_eigenvalue: l1.min_eigenvalue, positive_definite: l1.positive_definite },
        lemma2,
        step_size_bound: bound.value,
        bound_guaranteed: bound.guaranteed,
        step_size_within_bound: a.step_size < bound.value,
        spectral_radius,
        mean_stable: spectral_radius.map(|r| r < 1.0),
    })
}
