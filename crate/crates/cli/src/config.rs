//! Experiment configuration: a versioned JSON document parsed strictly.
//!
//! Only `schema_version`, `seed`, `family` and `schedule` are required;
//! every other section falls back to the maple-leaf defaults.

use std::path::{Path, PathBuf};

use ipsrf::measure::HistogramGrid;
use ipsrf::{contraction_factor, AffineMap, Epoch, MapFamily, SamplingMeasure, Schedule, ValidationReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub family: Vec<MapSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub distances: DistanceSpec,
    #[serde(default)]
    pub bounds: BoundSpec,
    #[serde(default)]
    pub figures: FigureSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// `f(x) = matrix x + offset`, matrix given row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Budget on the total-variation step between consecutive epochs.
    pub tv_bound: f64,
    pub epochs: Vec<EpochSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochSpec {
    pub weights: Vec<f64>,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub particles: usize,
    /// Common starting point of every particle; the origin when absent.
    pub start: Option<Vec<f64>>,
    /// Particle whose trajectory is written out and plotted.
    pub tracked_particle: usize,
    /// Within-epoch steps whose full cloud is written as a table.
    pub snapshot_steps: Vec<usize>,
    /// Merge cell for push-forward iterates, as a fraction of the absorbing diameter.
    pub merge_fraction: f64,
    /// Atom cap for push-forward iterates.
    pub max_atoms: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            particles: 2000,
            start: None,
            tracked_particle: 0,
            snapshot_steps: vec![1, 10, 100, 1000],
            merge_fraction: ipsrf::measure::DEFAULT_MERGE_FRACTION,
            max_atoms: ipsrf::measure::DEFAULT_MAX_ATOMS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Target on the certified distance to the invariant measure.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 10_000,
        }
    }
}

/// Distance series settings.
///
/// Clouds and the invariant estimate are merged onto one square grid of side
/// `grid_cell` before each exact transport solve; the merge moves mass by at
/// most the reported displacement, so every value is within that slack of the
/// distance between the unmerged measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSpec {
    /// Steps between points of the distance series.
    pub cadence: usize,
    /// Every step in `1..=dense_prefix` is also sampled.
    pub dense_prefix: usize,
    /// Particles used for each empirical measure; all of them when equal to `particles`.
    pub subsample: usize,
    pub grid_cell: f64,
}

impl Default for DistanceSpec {
    fn default() -> Self {
        Self {
            cadence: 100,
            dense_prefix: 20,
            subsample: 2000,
            grid_cell: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSpec {
    /// Exact push-forward iterates evaluated per epoch.
    pub iterate_steps: usize,
    /// Atom budget for each transport problem in the bound checks.
    pub atom_cap: usize,
    /// Bound on how far the maps move between epochs; zero for a fixed family.
    pub map_drift: f64,
    /// Relative slack on the geometric-decay check.
    pub decay_tol: f64,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self {
            iterate_steps: 12,
            atom_cap: 1000,
            map_drift: 0.0,
            decay_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureSpec {
    pub enabled: bool,
    /// Histogram window and bins; also the scatter window.
    pub grid: HistogramGrid,
    /// Resolution of the support raster.
    pub scatter_pixels: usize,
}

impl Default for FigureSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            grid: HistogramGrid {
                x_min: 0.2,
                x_max: 0.8,
                y_min: -0.05,
                y_max: 0.85,
                bins_x: 64,
                bins_y: 64,
            },
            scatter_pixels: 360,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/maple_leaf")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// The maple-leaf experiment: three epochs of 30000 steps.
    pub fn maple_leaf() -> Self {
        let family = [
            ([[0.8, 0.0], [0.0, 0.8]], [0.1, 0.04]),
            ([[0.5, 0.0], [0.0, 0.5]], [0.25, 0.4]),
            ([[0.355, 0.355], [0.355, -0.355]], [0.266, 0.078]),
            ([[0.355, -0.355], [-0.355, -0.355]], [0.378, 0.434]),
        ]
        .iter()
        .map(|(a, b)| MapSpec {
            matrix: a.iter().map(|row| row.to_vec()).collect(),
            offset: b.to_vec(),
        })
        .collect();
        let epochs = [
            [0.23, 0.22, 0.22, 0.33],
            [0.5, 0.2, 0.2, 0.1],
            [0.3, 0.1, 0.4, 0.2],
        ]
        .iter()
        .map(|w| EpochSpec {
            weights: w.to_vec(),
            length: 30_000,
        })
        .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 2017,
            family,
            schedule: ScheduleSpec {
                tv_bound: 0.6,
                epochs,
            },
            simulation: SimulationSpec {
                start: Some(vec![0.0, 0.0]),
                ..SimulationSpec::default()
            },
            estimator: EstimatorSpec::default(),
            distances: DistanceSpec::default(),
            bounds: BoundSpec::default(),
            figures: FigureSpec::default(),
            output_dir: default_output_dir(),
        }
    }

    /// Checks everything a run relies on and builds the model objects.
    pub fn validate(&self) -> CliResult<Validated> {
        if self.family.is_empty() {
            return bad("family must contain at least one map".into());
        }
        let maps = self
            .family
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let d = m.offset.len();
                if m.matrix.len() != d || m.matrix.iter().any(|row| row.len() != d) {
                    return bad(format!("map {j}: matrix must be {d}x{d} to match the offset"));
                }
                AffineMap::new(m.matrix.concat(), m.offset.clone())
                    .map_err(|e| CliError::core(format!("map {j}"), e))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let family = MapFamily::from_affine(maps).map_err(|e| CliError::core("family", e))?;
        let d = family.dimension();

        let epochs = self
            .schedule
            .epochs
            .iter()
            .enumerate()
            .map(|(k, ep)| {
                if ep.weights.len() != family.len() {
                    return bad(format!(
                        "epoch {k}: {} weights for {} maps",
                        ep.weights.len(),
                        family.len()
                    ));
                }
                let measure = SamplingMeasure::new(ep.weights.clone())
                    .map_err(|e| CliError::core(format!("epoch {k}"), e))?;
                Ok(Epoch {
                    measure,
                    length: ep.length,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let schedule = Schedule::new(epochs, self.schedule.tv_bound)
            .map_err(|e| CliError::core("schedule", e))?;
        let report = schedule.validate();
        if let Some(step) = report.steps.iter().find(|s| s.exceeds) {
            return bad(format!(
                "total-variation step {} -> {} is {} but the budget is {}",
                step.from_epoch, step.to_epoch, step.distance, report.tv_bound
            ));
        }
        let r = schedule
            .epochs()
            .iter()
            .enumerate()
            .map(|(k, ep)| {
                let r = contraction_factor(&family, &ep.measure)
                    .map_err(|e| CliError::core(format!("epoch {k}"), e))?;
                if r >= 1.0 {
                    return bad(format!(
                        "epoch {k}: contraction factor {r} is not below 1"
                    ));
                }
                Ok(r)
            })
            .collect::<CliResult<Vec<_>>>()?;

        let sim = &self.simulation;
        if sim.particles == 0 {
            return bad("simulation.particles must be positive".into());
        }
        if sim.tracked_particle >= sim.particles {
            return bad("simulation.tracked_particle is out of range".into());
        }
        if let Some(start) = &sim.start {
            if start.len() != d || start.iter().any(|v| !v.is_finite()) {
                return bad(format!("simulation.start must be {d} finite numbers"));
            }
        }
        if !(sim.merge_fraction > 0.0 && sim.merge_fraction.is_finite()) || sim.max_atoms == 0 {
            return bad("simulation.merge_fraction and max_atoms must be positive".into());
        }
        if !(self.estimator.tol > 0.0 && self.estimator.tol.is_finite()) {
            return bad("estimator.tol must be positive".into());
        }
        let dist = &self.distances;
        if dist.cadence == 0 {
            return bad("distances.cadence must be positive".into());
        }
        if dist.subsample == 0 || dist.subsample > sim.particles {
            return bad("distances.subsample must lie in 1..=particles".into());
        }
        if !(dist.grid_cell > 0.0 && dist.grid_cell.is_finite()) {
            return bad("distances.grid_cell must be positive".into());
        }
        let b = &self.bounds;
        if b.atom_cap < 4 {
            return bad("bounds.atom_cap must be at least 4".into());
        }
        if !(b.map_drift >= 0.0 && b.map_drift.is_finite()) {
            return bad("bounds.map_drift must be non-negative".into());
        }
        if !(b.decay_tol >= 0.0 && b.decay_tol.is_finite()) {
            return bad("bounds.decay_tol must be non-negative".into());
        }
        let g = &self.figures.grid;
        if g.bins_x == 0 || g.bins_y == 0 || !(g.x_max > g.x_min) || !(g.y_max > g.y_min) {
            return bad("figures.grid must have positive bins and a non-empty window".into());
        }
        if self.figures.scatter_pixels == 0 {
            return bad("figures.scatter_pixels must be positive".into());
        }
        if d != 2 && !schedule.is_empty() {
            // tables and distances work in any dimension; figures are planar
            if self.figures.enabled {
                return bad("figures need a planar family; set figures.enabled = false".into());
            }
        }

        Ok(Validated {
            start: sim.start.clone().unwrap_or_else(|| vec![0.0; d]),
            family,
            schedule,
            r,
            report,
        })
    }
}

fn bad<T>(msg: String) -> CliResult<T> {
    Err(CliError::Config(msg))
}

/// A configuration that passed [`ExperimentConfig::validate`].
#[derive(Clone, Debug)]
pub struct Validated {
    pub family: MapFamily,
    pub schedule: Schedule,
    /// Contraction factor per epoch.
    pub r: Vec<f64>,
    pub report: ValidationReport,
    pub start: Vec<f64>,
}
