use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use subdiff::error::{Error, Result};
use subdiff::experiments::montecarlo::{self, EstimateRow};
use subdiff::experiments::report::{self, CurveSummary};
use subdiff::experiments::{self, build_localization, ExperimentConfig, Scenario};
use subdiff::theory::MSDCurve;

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Multitask diffusion LMS simulator and MSD predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Master seed, replacing `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Number of iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo network MSD.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Theoretical transient and steady-state MSD.
    Predict {
        config: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Simulated curves of several configs side by side.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Add the predicted curve of every config.
        #[arg(long)]
        with_theory: bool,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Collinear target localization study.
    Localize {
        config: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Uniqueness certificates and stability report.
    Certify {
        config: PathBuf,
        #[command(flatten)]
        flags: Overrides,
    },
}

const SIMULATE_OUTPUTS: &[&str] = &["msd_simulated.csv", "summary.csv", "diverged_runs.csv", "dead_tap.csv"];
const PREDICT_OUTPUTS: &[&str] = &["msd_theory.csv", "steady_state.csv"];
const LOCALIZE_OUTPUTS: &[&str] =
    &["localization_msd.csv", "localization_summary.csv", "estimates.csv", "targets.csv", "agents.csv"];
const CERTIFY_OUTPUTS: &[&str] = &["certificate.csv"];

/// Output directory plus the subset of artifacts to write.
struct Sink {
    dir: PathBuf,
    selected: BTreeSet<String>,
}

impl Sink {
    fn new(dir: &Path, requested: &[String], known: &[&str]) -> Result<Self> {
        if let Some(bad) = requested.iter().find(|r| !known.contains(&r.as_str())) {
            return Err(Error::Config(format!("unknown output {bad:?}; this command writes {known:?}")));
        }
        let selected = if requested.is_empty() {
            known.iter().map(|s| s.to_string()).collect()
        } else {
            requested.iter().cloned().collect()
        };
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), selected })
    }

    fn wants(&self, name: &str) -> bool {
        self.selected.contains(name)
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        if !self.wants(name) {
            return Ok(());
        }
        self.write_always(name, f)
    }

    fn write_always(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut out)?;
        out.flush()?;
        Ok(())
    }

    fn echo_config(&self, name: &str, cfg: &ExperimentConfig) -> Result<()> {
        let text = cfg.to_toml_string()?;
        self.write_always(name, |w| Ok(w.write_all(text.as_bytes())?))
    }
}

fn load(path: &Path, flags: &Overrides) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path)?.with_overrides(flags.seed, flags.runs, flags.iters)
}

fn curve_writer(curve: &MSDCurve) -> impl FnOnce(&mut dyn Write) -> Result<()> + '_ {
    move |w| curve.write_csv(w)
}

fn simulate(path: &Path, flags: &Overrides) -> Result<()> {
    let cfg = load(path, flags)?;
    let sink = Sink::new(&flags.out, &cfg.outputs, SIMULATE_OUTPUTS)?;
    sink.echo_config("resolved_config.toml", &cfg)?;
    let exp = cfg.build()?;
    let mc = experiments::monte_carlo_msd(&exp)?;
    let tail = mc.curve.tail_average_db(report::TAIL_FRACTION);
    sink.write("msd_simulated.csv", curve_writer(&mc.curve))?;
    sink.write("summary.csv", |w| {
        writeln!(w, "variant,n_runs,n_iterations,master_seed,diverged_runs,tail_msd_db")?;
        writeln!(
            w,
            "{},{},{},{},{},{tail}",
            exp.algorithm.variant,
            cfg.n_runs,
            cfg.n_iterations,
            cfg.master_seed,
            mc.n_diverged()
        )?;
        Ok(())
    })?;
    sink.write("diverged_runs.csv", |w| {
        writeln!(w, "run")?;
        for r in &mc.diverged_runs {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    if let Some((agent, tap)) = exp.disturbance.as_ref().and_then(|d| d.dead_tap) {
        if sink.wants("dead_tap.csv") {
            let mags = montecarlo::tap_magnitude(&exp, agent, tap, cfg.n_runs, cfg.n_iterations)?;
            sink.write("dead_tap.csv", |w| {
                writeln!(w, "iteration,magnitude")?;
                for (i, m) in mags.iter().enumerate() {
                    writeln!(w, "{i},{m}")?;
                }
                Ok(())
            })?;
        }
    }
    println!(
        "simulated {} runs x {} iterations: tail MSD {tail:.3} dB, {} diverged",
        cfg.n_runs,
        cfg.n_iterations,
        mc.n_diverged()
    );
    Ok(())
}

fn predict(path: &Path, flags: &Overrides) -> Result<()> {
    let cfg = load(path, flags)?;
    let sink = Sink::new(&flags.out, &cfg.outputs, PREDICT_OUTPUTS)?;
    sink.echo_config("resolved_config.toml", &cfg)?;
    let exp = cfg.build()?;
    let p = experiments::predict(&exp)?;
    sink.write("msd_theory.csv", curve_writer(&p.curve))?;
    sink.write("steady_state.csv", |w| {
        writeln!(w, "msd_db,msd_linear,spectral_radius,doubling_steps")?;
        writeln!(w, "{},{},{},{}", p.steady_state.db, p.steady_state.linear, p.spectral_radius, p.steady_state.iterations)?;
        Ok(())
    })?;
    println!("steady-state MSD {:.3} dB, spectral radius {:.6}", p.steady_state.db, p.spectral_radius);
    Ok(())
}

/// Column names from file stems, suffixed with their position when repeated.
fn column_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned()))
        .collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| if stems.iter().filter(|t| *t == s).count() > 1 { format!("{s}_{i}") } else { s.clone() })
        .collect()
}

fn compare(paths: &[PathBuf], with_theory: bool, flags: &Overrides) -> Result<()> {
    let sink = Sink::new(&flags.out, &[], &["comparison.csv", "comparison_summary.csv"])?;
    let mut curves = Vec::new();
    for (name, path) in column_names(paths).into_iter().zip(paths) {
        let cfg = load(path, flags)?;
        sink.echo_config(&format!("resolved_config_{name}.toml"), &cfg)?;
        let exp = cfg.build()?;
        curves.push((name.clone(), experiments::monte_carlo_msd(&exp)?.curve));
        if with_theory {
            curves.push((format!("{name}_theory"), experiments::predict(&exp)?.curve));
        }
    }
    let cmp = experiments::compare_runs(curves)?;
    sink.write("comparison.csv", |w| cmp.write_table_csv(w))?;
    sink.write("comparison_summary.csv", |w| cmp.write_summary_csv(w))?;
    for s in &cmp.summaries {
        print_summary(s);
    }
    Ok(())
}

fn print_summary(s: &CurveSummary) {
    let crossing = s.crossing_iteration.map_or("never".to_string(), |c| c.to_string());
    println!("{}: tail MSD {:.3} dB, within 3 dB of tail at iteration {crossing}", s.name, s.tail_msd_db);
}

fn localize(path: &Path, flags: &Overrides) -> Result<()> {
    let cfg = load(path, flags)?;
    if cfg.scenario != Scenario::Localization {
        return Err(Error::Config("localize needs scenario = \"localization\"".into()));
    }
    let sink = Sink::new(&flags.out, &cfg.outputs, LOCALIZE_OUTPUTS)?;
    sink.echo_config("resolved_config.toml", &cfg)?;
    let loc = cfg.localization.as_ref().expect("resolved localization config");
    let scenario = build_localization(&loc.params, cfg.master_seed)?;
    let mu = cfg.algorithm.step_size;
    let results: Vec<_> = [cfg.algorithm.variant, loc.baseline]
        .into_iter()
        .map(|v| montecarlo::run_localization(v, &scenario, mu, cfg.n_iterations, cfg.n_runs, cfg.master_seed))
        .collect::<Result<_>>()?;
    let cmp = experiments::compare_runs(
        results.iter().map(|r| (r.variant.name().to_string(), r.monte_carlo.curve.clone())).collect(),
    )?;
    sink.write("localization_msd.csv", |w| cmp.write_table_csv(w))?;
    sink.write("localization_summary.csv", |w| {
        writeln!(w, "name,tail_msd_db,crossing_iteration,mean_line_distance,diverged_runs")?;
        for (s, r) in cmp.summaries.iter().zip(&results) {
            let crossing = s.crossing_iteration.map_or(String::new(), |c| c.to_string());
            writeln!(
                w,
                "{},{},{crossing},{},{}",
                s.name,
                s.tail_msd_db,
                r.mean_line_distance,
                r.monte_carlo.n_diverged()
            )?;
        }
        Ok(())
    })?;
    sink.write("estimates.csv", |w| {
        writeln!(w, "strategy,agent,target,x,y,z")?;
        for r in &results {
            for EstimateRow { agent, target, x, y, z } in r.estimate_rows(&scenario) {
                writeln!(w, "{},{agent},{target},{x},{y},{z}", r.variant.name())?;
            }
        }
        Ok(())
    })?;
    sink.write("targets.csv", |w| {
        writeln!(w, "target,x,y,z")?;
        for (q, t) in scenario.targets.iter().enumerate() {
            writeln!(w, "{q},{},{},{}", t[0], t[1], t[2])?;
        }
        Ok(())
    })?;
    sink.write("agents.csv", |w| {
        writeln!(w, "agent,target,x,y,z")?;
        for (k, p) in scenario.agent_positions.iter().enumerate() {
            writeln!(w, "{k},{},{},{},{}", scenario.assignment[k], p[0], p[1], p[2])?;
        }
        Ok(())
    })?;
    for (s, r) in cmp.summaries.iter().zip(&results) {
        print_summary(s);
        println!("{}: mean distance to target line {:.4}", s.name, r.mean_line_distance);
    }
    Ok(())
}

fn certify(path: &Path, flags: &Overrides) -> Result<()> {
    let cfg = load(path, flags)?;
    let sink = Sink::new(&flags.out, &cfg.outputs, CERTIFY_OUTPUTS)?;
    sink.echo_config("resolved_config.toml", &cfg)?;
    let exp = cfg.build()?;
    let rep = experiments::certify(&exp)?;
    sink.write("certificate.csv", |w| {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let optb = |v: Option<bool>| v.map_or(String::new(), |x| x.to_string());
        writeln!(w, "key,value")?;
        writeln!(w, "variant,{}", rep.variant)?;
        writeln!(w, "step_size,{}", rep.step_size)?;
        writeln!(w, "eta2,{}", rep.eta2)?;
        writeln!(w, "subspace_orthonormal,{}", rep.subspace_orthonormal)?;
        writeln!(w, "lemma1_min_eigenvalue,{}", rep.lemma1.min_eigenvalue)?;
        writeln!(w, "lemma1_positive_definite,{}", rep.lemma1.positive_definite)?;
        writeln!(w, "lemma2_min_eigenvalue,{}", opt(rep.lemma2.as_ref().map(|l| l.min_eigenvalue)))?;
        writeln!(w, "lemma2_positive_definite,{}", optb(rep.lemma2.as_ref().map(|l| l.positive_definite)))?;
        writeln!(w, "step_size_bound,{}", rep.step_size_bound)?;
        writeln!(w, "bound_guaranteed,{}", rep.bound_guaranteed)?;
        writeln!(w, "step_size_within_bound,{}", rep.step_size_within_bound)?;
        writeln!(w, "spectral_radius,{}", opt(rep.spectral_radius))?;
        writeln!(w, "mean_stable,{}", optb(rep.mean_stable))?;
        Ok(())
    })?;
    let json = serde_json::to_string_pretty(&rep).map_err(|e| Error::InvalidInput(e.to_string()))?;
    println!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: String,
    kind: &'a str,
}

fn report_error(error: String, kind: &str) {
    let json = serde_json::to_string(&ErrorReport { error, kind }).expect("error report serializes");
    eprintln!("{json}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error(e.render().to_string().trim_end().to_string(), "usage");
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate { config, flags } => simulate(config, flags),
        Command::Predict { config, flags } => predict(config, flags),
        Command::Compare { configs, with_theory, flags } => compare(configs, *with_theory, flags),
        Command::Localize { config, flags } => localize(config, flags),
        Command::Certify { config, flags } => certify(config, flags),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.to_string(), e.kind());
            ExitCode::FAILURE
        }
    }
}
