//! Collinear target localization: agents estimate the position of their
//! assigned target from noisy range-plus-offset measurements, the targets
//! sharing the rotated plane `span(R_{1,2})` as common latent subspace.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Measurement, MeasurementSource};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec};
use crate::network::{geometric_topology, NetworkTopology};
use crate::rng;
use crate::subspace::SubspacePair;

/// Scenario parameters; defaults reproduce the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    /// `(θ_x, θ_y, θ_z)` in radians.
    pub rotation_angles: [f64; 3],
    pub line_anchor: [f64; 2],
    pub epsilons: Vec<f64>,
    pub n_agents: usize,
    /// Padding of the agent placement box around the targets.
    pub margin: f64,
    /// Communication radius of the geometric topology.
    pub radius: f64,
    pub sigma_alpha: [f64; 2],
    pub sigma_beta: f64,
    pub sigma_z: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            rotation_angles: [PI / 6.0, PI / 3.0, PI / 4.0],
            line_anchor: [1.0, 2.0],
            epsilons: vec![0.0, 1.0, 3.0, 4.0, 7.0, 7.5, 9.0],
            n_agents: 100,
            margin: 1.0,
            radius: 3.0,
            sigma_alpha: [0.1, 0.1],
            sigma_beta: 0.001,
            sigma_z: 0.3,
        }
    }
}

/// A built scenario: targets, agents, their assignment and per-agent
/// measurement geometry.
#[derive(Debug, Clone)]
pub struct LocalizationScenario {
    pub params: LocalizationParams,
    pub rotation: Matrix3<f64>,
    pub targets: Vec<Vector3<f64>>,
    pub agent_positions: Vec<Vector3<f64>>,
    pub assignment: Vec<usize>,
    /// Unit direction `x_{kq}` from agent `k` to its target.
    pub directions: Vec<Vector3<f64>>,
    /// Orthonormal pair completing `x_{kq}` to a basis of `R³`.
    pub perpendiculars: Vec<[Vector3<f64>; 2]>,
    pub topology: NetworkTopology,
    pub pair: SubspacePair,
}

/// `R = R_x(θ_x) R_y(θ_y) R_z(θ_z)`.
pub fn rotation_matrix(angles: [f64; 3]) -> Matrix3<f64> {
    let [ax, ay, az] = angles;
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

fn to_complex(v: &Vector3<f64>) -> CVec {
    CVec::from_iterator(3, v.iter().map(|&a| c(a, 0.0)))
}

/// Two orthonormal vectors orthogonal to the unit vector `x`.
fn perpendicular_pair(x: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let axis = (0..3)
        .min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()))
        .expect("three axes");
    let e = Vector3::ith(axis, 1.0);
    let u1 = x.cross(&e).normalize();
    let u2 = x.cross(&u1);
    [u1, u2]
}

impl LocalizationScenario {
    pub fn n_agents(&self) -> usize {
        self.agent_positions.len()
    }

    /// Target of agent `k` as a complex vector with zero imaginary part.
    pub fn optimum(&self, k: usize) -> CVec {
        to_complex(&self.targets[self.assignment[k]])
    }

    pub fn optima(&self) -> Vec<CVec> {
        (0..self.n_agents()).map(|k| self.optimum(k)).collect()
    }

    /// Anchor point `R_{1,2} v` and unit direction `r₃` of the target line.
    pub fn line(&self) -> (Vector3<f64>, Vector3<f64>) {
        let [v1, v2] = self.params.line_anchor;
        let anchor = self.rotation.column(0) * v1 + self.rotation.column(1) * v2;
        (anchor, self.rotation.column(2).into_owned())
    }

    /// Euclidean distance from `p` to the target line.
    pub fn distance_to_line(&self, p: &Vector3<f64>) -> f64 {
        let (anchor, dir) = self.line();
        let d = p - anchor;
        (d - dir * d.dot(&dir)).norm()
    }
}

fn check_params(p: &LocalizationParams) -> Result<()> {
    if !p.rotation_angles.iter().chain(&p.line_anchor).all(|a| a.is_finite()) {
        return Err(Error::InvalidInput("rotation angles and line anchor must be finite".into()));
    }
    if p.epsilons.is_empty() {
        return Err(Error::InvalidInput("at least one target is required".into()));
    }
    if p.n_agents == 0 {
        return Err(Error::InvalidInput("at least one agent is required".into()));
    }
    if !(p.radius > 0.0) || !(p.margin >= 0.0) {
        return Err(Error::InvalidInput("radius must be positive and margin non-negative".into()));
    }
    let sds = [p.sigma_alpha[0], p.sigma_alpha[1], p.sigma_beta, p.sigma_z];
    if !sds.iter().all(|s| *s >= 0.0) {
        return Err(Error::InvalidInput("noise standard deviations must be >= 0".into()));
    }
    Ok(())
}

const PLACEMENT_ATTEMPTS: usize = 100;

/// Builds targets `w_q = R_{1,2} v + ε_q r₃`, places agents uniformly in a
/// box around the targets (redrawing until the geometric graph is
/// connected) and assigns each agent a uniformly random target.
pub fn build_localization(params: &LocalizationParams, seed: u64) -> Result<LocalizationScenario> {
    check_params(params)?;
    let rotation = rotation_matrix(params.rotation_angles);
    let [v1, v2] = params.line_anchor;
    let anchor = rotation.column(0) * v1 + rotation.column(1) * v2;
    let r3 = rotation.column(2).into_owned();
    let targets: Vec<Vector3<f64>> = params.epsilons.iter().map(|&e| anchor + r3 * e).collect();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for t in &targets {
        lo = lo.inf(t);
        hi = hi.sup(t);
    }
    lo -= Vector3::repeat(params.margin);
    hi += Vector3::repeat(params.margin);

    let mut r = rng::stream(seed, &[rng::TAG_LAYOUT]);
    let mut placed = None;
    let mut last_err = None;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let positions: Vec<Vector3<f64>> = (0..params.n_agents)
            .map(|_| Vector3::from_fn(|i, _| rng::uniform(&mut r, lo[i], hi[i])))
            .collect();
        let points: Vec<Vec<f64>> = positions.iter().map(|p| p.iter().copied().collect()).collect();
        match geometric_topology(&points, params.radius) {
            Ok(top) => {
                placed = Some((positions, top));
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (agent_positions, topology) = match placed {
        Some(p) => p,
        None => return Err(last_err.expect("at least one attempt")),
    };
    let assignment: Vec<usize> = (0..params.n_agents).map(|_| r.random_range(0..targets.len())).collect();

    let mut directions = Vec::with_capacity(params.n_agents);
    let mut perpendiculars = Vec::with_capacity(params.n_agents);
    for (k, p) in agent_positions.iter().enumerate() {
        let diff = targets[assignment[k]] - p;
        let dist = diff.norm();
        if !(dist > 1e-9) {
            return Err(Error::InvalidInput(format!("agent {k} is co-located with its target")));
        }
        let x = diff / dist;
        perpendiculars.push(perpendicular_pair(&x));
        directions.push(x);
    }

    let theta = CMat::from_fn(3, 2, |i, j| c(rotation[(i, j)], 0.0));
    let theta_perp = CMat::from_fn(3, 1, |i, _| c(rotation[(i, 2)], 0.0));
    let pair = SubspacePair::from_basis(theta, theta_perp)?;
    Ok(LocalizationScenario {
        params: params.clone(),
        rotation,
        targets,
        agent_positions,
        assignment,
        directions,
        perpendiculars,
        topology,
        pair,
    })
}

/// One noisy measurement of agent `k`:
/// `x = (1 − β) x_{kq} + α₁ u₁ + α₂ u₂`, `d = x w_q + z`.
pub fn localization_measurement<R: Rng + ?Sized>(
    scenario: &LocalizationScenario,
    k: usize,
    r: &mut R,
) -> (f64, Vector3<f64>) {
    let p = &scenario.params;
    let beta = p.sigma_beta * rng::normal(r);
    let a1 = p.sigma_alpha[0] * rng::normal(r);
    let a2 = p.sigma_alpha[1] * rng::normal(r);
    let z = p.sigma_z * rng::normal(r);
    let [u1, u2] = &scenario.perpendiculars[k];
    let x = scenario.directions[k] * (1.0 - beta) + u1 * a1 + u2 * a2;
    let d = x.dot(&scenario.targets[scenario.assignment[k]]) + z;
    (d, x)
}

/// Per-agent localization streams for one run.
pub struct LocalizationSource<'a> {
    scenario: &'a LocalizationScenario,
    streams: Vec<ChaCha8Rng>,
}

impl<'a> LocalizationSource<'a> {
    pub fn new(scenario: &'a LocalizationScenario, run_seed: u64) -> Self {
        let streams = (0..scenario.n_agents()).map(|k| rng::agent_stream(run_seed, k)).collect();
        Self { scenario, streams }
    }
}

impl MeasurementSource for LocalizationSource<'_> {
    fn fill(&mut self, out: &mut [Measurement]) {
        for (k, (m, r)) in out.iter_mut().zip(&mut self.streams).enumerate() {
            let (d, x) = localization_measurement(self.scenario, k, r);
            m.d = Complex64::new(d, 0.0);
            for i in 0..3 {
                m.x[i] = Complex64::new(x[i], 0.0);
            }
        }
    }
}
