//! End-to-end run: simulate each epoch, estimate its invariant measure,
//! sample the distance series and evaluate the bounds.
//!
//! Nothing here touches the filesystem; see [`crate::output`].

use ipsrf::measure::{quantize, simulate_epoch_recorded, Histogram, Quantized, RecordPlan, Snap};
use ipsrf::rng::auxiliary_stream;
use ipsrf::transport::wasserstein_exact_capped;
use ipsrf::{
    estimate_invariant_measure, histogram_density, DiscreteMeasure, GroundCost,
    InvariantEstimate, ParticleCloud,
};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{evaluate_bounds, BoundsOutcome, InvariantInput};
use crate::config::{ExperimentConfig, Validated};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceRow {
    pub epoch: usize,
    pub step: usize,
    pub d_subsequent: f64,
    pub d_to_invariant: f64,
}

#[derive(Clone, Debug)]
pub struct EpochArtifacts {
    pub epoch: usize,
    pub r: f64,
    /// Cloud at step 0, identical to the previous epoch's final cloud.
    pub start: ParticleCloud,
    /// Clouds at the configured snapshot steps.
    pub snapshots: Vec<ParticleCloud>,
    pub last: ParticleCloud,
    /// Trajectory of the tracked particle, flattened.
    pub path: Vec<f64>,
    /// Occupation histogram of the tracked trajectory (planar families only).
    pub histogram: Option<Histogram>,
    pub invariant: InvariantEstimate,
    /// Invariant estimate merged onto the distance grid.
    pub invariant_grid: Quantized,
    pub series: Vec<DistanceRow>,
    /// Largest grid-merge slack over the `d_subsequent` column.
    pub slack_subsequent: f64,
    /// Largest slack over the `d_to_invariant` column, including the
    /// estimator's certified distance.
    pub slack_to_invariant: f64,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    /// Configuration as run, with any seed override applied.
    pub config: ExperimentConfig,
    pub validated: Validated,
    pub epochs: Vec<EpochArtifacts>,
    pub bounds: BoundsOutcome,
}

/// Steps where the distance series is sampled.
pub fn series_steps(length: usize, cadence: usize, dense_prefix: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (1..=dense_prefix.min(length)).collect();
    steps.extend((cadence..=length).step_by(cadence.max(1)));
    steps.push(length);
    steps.sort_unstable();
    steps.dedup();
    steps.retain(|s| *s >= 1);
    steps
}

fn subset(seed: u64, purpose: u64, n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut rng = auxiliary_stream(seed, purpose);
    let mut idx = index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

fn exact(a: &DiscreteMeasure, b: &DiscreteMeasure, what: impl Fn() -> String) -> CliResult<f64> {
    wasserstein_exact_capped(a, b, GroundCost::default(), a.len() + b.len())
        .map(|t| t.distance)
        .map_err(|e| CliError::core(what(), e))
}

/// Runs the experiment on a dedicated pool of `threads` workers.
pub fn run(config: &ExperimentConfig, threads: usize) -> CliResult<RunArtifacts> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| run_inner(config, threads.max(1)))
}

fn run_inner(config: &ExperimentConfig, threads: usize) -> CliResult<RunArtifacts> {
    let validated = config.validate()?;
    let family = &validated.family;
    let sim = &config.simulation;
    let dist = &config.distances;
    let seed = config.seed;

    let mut cloud = ParticleCloud::replicate(&validated.start, sim.particles, 0)
        .map_err(|e| CliError::core("initial cloud", e))?;
    let mut epochs = Vec::with_capacity(validated.schedule.len());

    for (k, ep) in validated.schedule.epochs().iter().enumerate() {
        let t = ep.length;
        let invariant = estimate_invariant_measure(
            family,
            &ep.measure,
            config.estimator.tol,
            config.estimator.max_iter,
        )
        .map_err(|e| CliError::core(format!("epoch {k}: invariant estimate"), e))?;
        let on_grid = |nu: &DiscreteMeasure| quantize(nu, dist.grid_cell, Snap::Centroid, 1.0);
        let invariant_grid = on_grid(&invariant.measure);

        let steps = series_steps(t, dist.cadence, dist.dense_prefix);
        let mut record: Vec<usize> = steps.iter().flat_map(|&s| [s - 1, s]).collect();
        record.extend(sim.snapshot_steps.iter().copied().filter(|&s| s <= t));
        record.push(0);
        record.sort_unstable();
        record.dedup();
        let plan = RecordPlan {
            steps: record.clone(),
            track_particle: Some(sim.tracked_particle),
        };
        let rec = simulate_epoch_recorded(&cloud, family, &ep.measure, t, seed, &plan, threads)
            .map_err(|e| CliError::core(format!("epoch {k}: simulation"), e))?;
        let at = |s: usize| &rec.snapshots[record.binary_search(&s).expect("recorded step")];

        let main = subset(seed, k as u64, sim.particles, dist.subsample);
        let measured = steps
            .par_iter()
            .map(|&s| {
                let now = on_grid(&at(s).subsample_measure(&main));
                let before = on_grid(&at(s - 1).subsample_measure(&main));
                let ctx = || format!("epoch {k} step {s}");
                let row = DistanceRow {
                    epoch: k,
                    step: s,
                    d_subsequent: exact(&now.measure, &before.measure, ctx)?,
                    d_to_invariant: exact(&now.measure, &invariant_grid.measure, ctx)?,
                };
                Ok((row, now.displacement + before.displacement, now.displacement))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let series = measured.iter().map(|m| m.0).collect();
        let slack_subsequent = measured.iter().map(|m| m.1).fold(0.0, f64::max);
        let slack_to_invariant = measured.iter().map(|m| m.2).fold(0.0, f64::max)
            + invariant_grid.displacement
            + invariant.distance_bound;

        let histogram = if family.dimension() == 2 {
            Some(
                histogram_density(&rec.path, &config.figures.grid)
                    .map_err(|e| CliError::core(format!("epoch {k}: histogram"), e))?,
            )
        } else {
            None
        };
        let snapshots = sim
            .snapshot_steps
            .iter()
            .filter(|&&s| s >= 1 && s <= t)
            .map(|&s| at(s).clone())
            .collect();
        epochs.push(EpochArtifacts {
            epoch: k,
            r: validated.r[k],
            start: at(0).clone(),
            snapshots,
            last: rec.last.clone(),
            path: rec.path,
            histogram,
            invariant,
            invariant_grid,
            series,
            slack_subsequent,
            slack_to_invariant,
        });
        cloud = rec.last.handoff(k + 1);
    }

    let inputs: Vec<InvariantInput> = epochs
        .iter()
        .map(|e| InvariantInput {
            measure: e.invariant.measure.clone(),
            distance_bound: e.invariant.distance_bound,
        })
        .collect();
    let bounds = evaluate_bounds(config, &validated, &inputs)?;

    Ok(RunArtifacts {
        config: config.clone(),
        validated,
        epochs,
        bounds,
    })
}
