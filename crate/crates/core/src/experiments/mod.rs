//! Experiment configuration, Monte Carlo harness, the validation and
//! localization scenarios, and reports.

pub mod config;
pub mod localization;
pub mod montecarlo;
pub mod report;

pub use config::{validation_setting, Experiment, ExperimentConfig, SChoice, Scenario, SubspaceChoice};
pub use localization::{build_localization, localization_measurement, LocalizationParams, LocalizationScenario};
pub use montecarlo::{monte_carlo_msd, monte_carlo_msd_with, run_localization, tap_magnitude, LocalizationResult, MonteCarloResult};
pub use report::{certify, compare_runs, predict, CertifyReport, Comparison, Prediction};
