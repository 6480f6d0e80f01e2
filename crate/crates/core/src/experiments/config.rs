//! Versioned TOML experiment configuration and its resolution into runnable
//! objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgorithmConfig, DisturbanceSpec, Variant};
use crate::datamodel::{self, AgentEnvironment, InputKind, TaskModel};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec};
use crate::network::{
    self, build_topology, identity_combination, metropolis_combination, uniform_combination, CombinationMatrix,
    NetworkTopology,
};
use crate::rng;
use crate::subspace::{standard_basis_subspace, ula_vandermonde_subspace, SubspacePair};
use crate::theory::NoiseForm;

use super::localization::LocalizationParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Validation1,
    Validation2,
    Drift,
    Localization,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationRule {
    #[default]
    Uniform,
    Metropolis,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub step_size: f64,
    #[serde(default)]
    pub eta2: f64,
    #[serde(default)]
    pub combination: CombinationRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    /// The bundled 12-agent network.
    Fixture12,
    /// A topology fixture file; relative paths resolve against the config.
    File { path: PathBuf },
    Edges { n_agents: usize, edges: Vec<(usize, usize)> },
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::Fixture12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubspaceSpec {
    StandardBasis { dim: usize, rank: usize },
    Ula { dim: usize, angles: Vec<f64>, spacing_ratio: f64 },
    /// Row-major real and imaginary parts of `Θ`.
    Explicit { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl SubspaceSpec {
    pub fn build(&self) -> Result<SubspacePair> {
        match self {
            SubspaceSpec::StandardBasis { dim, rank } => standard_basis_subspace(*dim, *rank),
            SubspaceSpec::Ula { dim, angles, spacing_ratio } => ula_vandermonde_subspace(*dim, angles, *spacing_ratio),
            SubspaceSpec::Explicit { re, im } => {
                let rows = re.len();
                let cols = re.first().map_or(0, |r| r.len());
                if rows == 0 || im.len() != rows || re.iter().chain(im).any(|r| r.len() != cols) {
                    return Err(Error::Config("explicit subspace: re and im must be equal-shape non-empty matrices".into()));
                }
                SubspacePair::from_theta(CMat::from_fn(rows, cols, |i, j| c(re[i][j], im[i][j])))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub input: InputKind,
    pub input_variance_range: (f64, f64),
    pub noise_variance_range: (f64, f64),
    pub u_stddev: f64,
    pub xi_stddev: f64,
    pub nu_stddev: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            input: InputKind::White,
            input_variance_range: (0.8, 1.2),
            noise_variance_range: (0.18, 0.22),
            u_stddev: 1.0,
            xi_stddev: 1.0,
            nu_stddev: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// `[agent, tap]`, zero-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_tap: Option<(usize, usize)>,
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub stddev: f64,
}

impl From<&DisturbanceConfig> for DisturbanceSpec {
    fn from(d: &DisturbanceConfig) -> Self {
        DisturbanceSpec { dead_tap: d.dead_tap, combination_noise_mean: d.mean, combination_noise_stddev: d.stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySpec {
    pub noise_form: NoiseForm,
}

/// Localization section: scenario geometry plus the strategy it is compared
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    #[serde(default = "default_baseline")]
    pub baseline: Variant,
    #[serde(flatten)]
    pub params: LocalizationParams,
}

fn default_baseline() -> Variant {
    Variant::NoncoopLms
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self { baseline: default_baseline(), params: LocalizationParams::default() }
    }
}

fn default_runs() -> usize {
    100
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    pub n_iterations: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Artifact file names to write; empty means all.
    #[serde(default)]
    pub outputs: Vec<String>,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<SubspaceSpec>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationConfig>,
    #[serde(default)]
    pub theory: TheorySpec,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Validates the config and fills in scenario defaults.
    pub fn resolved(mut self) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_runs == 0 || self.n_iterations == 0 {
            return Err(Error::Config("n_runs and n_iterations must be >= 1".into()));
        }
        match self.scenario {
            Scenario::Localization => {
                if self.localization.is_none() {
                    self.localization = Some(LocalizationConfig::default());
                }
            }
            _ => {
                if self.subspace.is_none() {
                    self.subspace = Some(SubspaceSpec::StandardBasis { dim: 5, rank: 3 });
                }
                if self.localization.is_some() {
                    return Err(Error::Config("a [localization] section needs scenario = \"localization\"".into()));
                }
            }
        }
        Ok(self)
    }

    pub fn with_overrides(mut self, seed: Option<u64>, runs: Option<usize>, iters: Option<usize>) -> Result<Self> {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        if let Some(r) = runs {
            self.n_runs = r;
        }
        if let Some(i) = iters {
            self.n_iterations = i;
        }
        self.resolved()
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn topology(&self) -> Result<NetworkTopology> {
        match &self.network {
            NetworkSpec::Fixture12 => Ok(network::validation_fixture()),
            NetworkSpec::File { path } => NetworkTopology::from_fixture_file(&self.resolve_path(path)),
            NetworkSpec::Edges { n_agents, edges } => build_topology(*n_agents, edges),
        }
    }

    /// Builds topology, subspace, tasks, environments and the algorithm.
    pub fn build(&self) -> Result<Experiment> {
        if self.scenario == Scenario::Localization {
            return Err(Error::Config("localization configs are run with `localize`".into()));
        }
        let topology = self.topology()?;
        let pair = self.subspace.as_ref().expect("resolved config has a subspace").build()?;
        let combination = combination_for(self.algorithm.combination, &topology);
        let algorithm = AlgorithmConfig::new(
            self.algorithm.variant,
            self.algorithm.step_size,
            self.algorithm.eta2,
            combination,
            pair.clone(),
        )?;
        let d = &self.data;
        let tasks = datamodel::sample_tasks(&pair, topology.n_agents(), d.u_stddev, d.xi_stddev, d.nu_stddev, self.master_seed)?;
        let environments = datamodel::sample_environments(
            &topology,
            &tasks,
            d.input_variance_range,
            d.noise_variance_range,
            d.input,
            self.master_seed,
        )?;
        Ok(Experiment {
            config: self.clone(),
            topology,
            tasks,
            environments,
            algorithm,
            disturbance: self.disturbance.as_ref().map(DisturbanceSpec::from),
        })
    }
}

pub fn combination_for(rule: CombinationRule, topology: &NetworkTopology) -> CombinationMatrix {
    match rule {
        CombinationRule::Uniform => uniform_combination(topology),
        CombinationRule::Metropolis => metropolis_combination(topology),
        CombinationRule::Identity => identity_combination(topology.n_agents()),
    }
}

/// A resolved, runnable Gaussian-data experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub topology: NetworkTopology,
    pub tasks: TaskModel,
    pub environments: Vec<AgentEnvironment>,
    pub algorithm: AlgorithmConfig,
    pub disturbance: Option<DisturbanceSpec>,
}

impl Experiment {
    pub fn n_agents(&self) -> usize {
        self.topology.n_agents()
    }

    pub fn optima(&self) -> Vec<CVec> {
        self.environments.iter().map(|e| e.w_opt().clone()).collect()
    }

    /// Seed of Monte Carlo run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        rng::run_seed(self.config.master_seed, run as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceChoice {
    /// Standard basis, `L = 5`, `M = 3`.
    Theta1,
    /// Uniform linear array steering matrix with angles `π/6, π/4, π/3`.
    Theta2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SChoice {
    /// `S = S_Θ`.
    Subspace,
    /// `S = I_L`.
    Identity,
}

pub const VALIDATION_ITERATIONS: usize = 2000;
pub const DRIFT_ITERATIONS: usize = 50_000;

/// Fully resolved config for one of the three validation settings on the
/// 12-agent network (`L = 5`, `M = 3`, uniform combination, 100 runs).
///
/// `eta2 > 0` selects the leaky variant; otherwise `s_choice` picks between
/// `alg1` and `alg1_identity_s`. Setting 2 draws mismatch components with
/// standard deviation 0.1; setting 3 forces `Θ₁` and correlated inputs with a
/// dead tap at agent 0, tap 4, and combination noise `𝒩(10⁻⁴, 10⁻⁸)`.
pub fn validation_setting(
    setting: u8,
    input: InputKind,
    subspace: SubspaceChoice,
    mu: f64,
    eta2: f64,
    s_choice: SChoice,
) -> Result<ExperimentConfig> {
    let (scenario, nu_stddev, disturbance, iterations) = match setting {
        1 => (Scenario::Validation1, 0.0, None, VALIDATION_ITERATIONS),
        2 => (Scenario::Validation2, 0.1, None, VALIDATION_ITERATIONS),
        3 => {
            if subspace != SubspaceChoice::Theta1 || input != InputKind::Correlated {
                return Err(Error::InvalidInput("setting 3 requires theta1 with correlated inputs".into()));
            }
            let d = DisturbanceConfig { dead_tap: Some((0, 4)), mean: 1e-4, stddev: 1e-4 };
            (Scenario::Drift, 0.0, Some(d), DRIFT_ITERATIONS)
        }
        other => return Err(Error::InvalidInput(format!("unknown validation setting {other}"))),
    };
    if !(eta2 >= 0.0) {
        return Err(Error::InvalidInput(format!("η₂ must be >= 0, got {eta2}")));
    }
    let variant = match (eta2 > 0.0, s_choice) {
        (true, _) => Variant::Alg2,
        (false, SChoice::Subspace) => Variant::Alg1,
        (false, SChoice::Identity) => Variant::Alg1IdentityS,
    };
    let subspace = match subspace {
        SubspaceChoice::Theta1 => SubspaceSpec::StandardBasis { dim: 5, rank: 3 },
        SubspaceChoice::Theta2 => SubspaceSpec::Ula {
            dim: 5,
            angles: vec![std::f64::consts::PI / 6.0, std::f64::consts::PI / 4.0, std::f64::consts::PI / 3.0],
            spacing_ratio: 0.5,
        },
    };
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        scenario,
        n_runs: 100,
        n_iterations: iterations,
        master_seed: 1,
        outputs: Vec::new(),
        algorithm: AlgorithmSpec { variant, step_size: mu, eta2, combination: CombinationRule::Uniform },
        network: NetworkSpec::Fixture12,
        subspace: Some(subspace),
        data: DataSpec { input, nu_stddev, ..DataSpec::default() },
        disturbance,
        localization: None,
        theory: TheorySpec::default(),
        base_dir: None,
    }
    .resolved()
}
