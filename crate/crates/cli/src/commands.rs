//! Subcommands and their flag definitions.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ipsrf::measure::read_measure_table;
use ipsrf::transport::{sinkhorn_auto, wasserstein_interval, SinkhornOptions, DEFAULT_EXACT_CAP};
use ipsrf::{test_function_bound, DiscreteMeasure, GroundCost};

use crate::analysis::{evaluate_bounds, InvariantInput};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::run;
use crate::output::{write_run, Manifest, Summary};

#[derive(Debug, Parser)]
#[command(name = "ipsrf", version, about = "Iterated piecewise-stationary random function experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate all epochs, evaluate the bounds and write artifacts.
    Run(RunArgs),
    /// Recompute the bounds from the artifacts of an earlier run.
    Analyze(AnalyzeArgs),
    /// Distance between two measure tables.
    Distances(DistanceArgs),
    /// Check a configuration and print its contraction constants.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub no_figures: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory written by `run`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    /// Largest combined support solved exactly; larger inputs get an interval.
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    pub cap: usize,
    /// Also report an entropic estimate at this relative accuracy.
    #[arg(long)]
    pub sinkhorn: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Distances(args) => cmd_distances(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn stdout_line(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let started = Instant::now();
    let artifacts = run(&config, args.threads)?;
    let manifest = write_run(&artifacts, &out, !args.no_figures && config.figures.enabled)?;
    for e in &artifacts.epochs {
        stdout_line(&format!(
            "epoch {}: r = {:.6}, invariant atoms = {}, certified distance = {:.3e}, final d_to_invariant = {:.4}",
            e.epoch,
            e.r,
            e.invariant.measure.len(),
            e.invariant.distance_bound,
            e.series.last().map_or(0.0, |r| r.d_to_invariant)
        ))?;
    }
    stdout_line(&artifacts.bounds.report.to_table())?;
    stdout_line(&format!(
        "wrote {} data files and {} figures to {}",
        manifest.data.len(),
        manifest.figures.len(),
        out.display()
    ))?;
    eprintln!("elapsed {:.2} s", started.elapsed().as_secs_f64());
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let dir = &args.out;
    let manifest = Manifest::load(dir)?;
    let problems = manifest.verify(dir)?;
    if !problems.is_empty() {
        return Err(CliError::Config(format!(
            "artifacts do not match the manifest: {}",
            problems.join("; ")
        )));
    }
    let config = ExperimentConfig::load(&dir.join("config.json"))?;
    let validated = config.validate()?;
    let summary_path = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path).map_err(|e| CliError::io(&summary_path, e))?;
    let summary: Summary = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", summary_path.display())))?;
    let invariants = summary
        .epochs
        .iter()
        .map(|e| {
            let path = dir.join(format!("invariant/epoch{}.txt", e.epoch));
            let measure = load_measure(&path)?;
            Ok(InvariantInput {
                measure,
                distance_bound: e.invariant.distance_bound,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    let bounds = pool.install(|| evaluate_bounds(&config, &validated, &invariants))?;
    stdout_line(&bounds.report.to_table())?;

    let stored_path = dir.join("bounds.json");
    let stored = std::fs::read_to_string(&stored_path).map_err(|e| CliError::io(&stored_path, e))?;
    let stored: serde_json::Value = serde_json::from_str(&stored)
        .map_err(|e| CliError::Config(format!("{}: {e}", stored_path.display())))?;
    let fresh = serde_json::to_value(&bounds).expect("serializable");
    match max_relative_difference(&stored, &fresh) {
        Some(diff) if diff <= REPORT_MATCH_TOL => stdout_line(&format!(
            "matches stored report: yes (largest relative difference {diff:.1e})"
        )),
        Some(diff) => stdout_line(&format!(
            "matches stored report: no (largest relative difference {diff:.1e})"
        )),
        None => stdout_line("matches stored report: no (different structure)"),
    }
}

/// Table round trips renormalise weights, which moves the last few bits.
const REPORT_MATCH_TOL: f64 = 1e-9;

/// Largest relative difference between numbers at matching positions, or
/// `None` when the two documents differ in anything but numbers.
fn max_relative_difference(a: &serde_json::Value, b: &serde_json::Value) -> Option<f64> {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64()?, y.as_f64()?);
            Some((x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .map(|(p, q)| max_relative_difference(p, q))
            .try_fold(0.0, |acc, d| d.map(|d| f64::max(acc, d))),
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x
            .iter()
            .map(|(k, p)| max_relative_difference(p, y.get(k)?))
            .try_fold(0.0, |acc, d| d.map(|d| f64::max(acc, d))),
        _ => (a == b).then_some(0.0),
    }
}

fn load_measure(path: &Path) -> CliResult<DiscreteMeasure> {
    read_measure_table(path)
        .map_err(|e| CliError::io(path, e))?
        .map_err(|e| CliError::core(path.display(), e))
}

pub fn cmd_distances(args: &DistanceArgs) -> CliResult<()> {
    let a = load_measure(&args.first)?;
    let b = load_measure(&args.second)?;
    let cost = GroundCost::default();
    let iv = wasserstein_interval(&a, &b, cost, args.cap).map_err(|e| CliError::core("distance", e))?;
    if iv.lower == iv.upper {
        stdout_line(&format!("W1 = {}", iv.estimate))?;
    } else {
        stdout_line(&format!(
            "W1 in [{}, {}] (estimate {}, merge cell {})",
            iv.lower,
            iv.upper,
            iv.estimate,
            iv.cell.unwrap_or(0.0)
        ))?;
    }
    if let Some(rel) = args.sinkhorn {
        let est = sinkhorn_auto(&a, &b, cost, rel, &SinkhornOptions::default())
            .map_err(|e| CliError::core("sinkhorn", e))?;
        stdout_line(&format!(
            "sinkhorn W1 = {} (epsilon {:.3e}, bias bound {:.3e})",
            est.distance, est.epsilon, est.error_bound
        ))?;
    }
    Ok(())
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let v = config.validate()?;
    let radius = v.family.absorbing_radius();
    stdout_line(&format!(
        "{} maps in dimension {}, {} epochs, {} steps in total",
        v.family.len(),
        v.family.dimension(),
        v.schedule.len(),
        v.schedule.total_steps()
    ))?;
    for (k, r) in v.r.iter().enumerate() {
        stdout_line(&format!("epoch {k}: contraction factor r = {r:.6}"))?;
    }
    for st in &v.report.steps {
        stdout_line(&format!(
            "TV step {} -> {}: {:.6} (budget {})",
            st.from_epoch, st.to_epoch, st.distance, v.report.tv_bound
        ))?;
    }
    match radius {
        Some(r) => {
            let b = test_function_bound(&v.family).map_err(|e| CliError::core("test-function bound", e))?;
            stdout_line(&format!("absorbing radius R = {r:.6}, B = 2R = {b:.6}"))?;
        }
        None => stdout_line("no absorbing ball: some map is not a strict contraction")?,
    }
    stdout_line("config is valid")
}
