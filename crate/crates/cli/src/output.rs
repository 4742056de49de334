//! Writes run artifacts to disk and records each file in the manifest.
//!
//! Layout below the output directory:
//!
//! | file | contents |
//! |------|----------|
//! | `config.json` | configuration as run |
//! | `summary.json` | per-epoch constants, estimator results, noise levels |
//! | `distances.csv` | `epoch,step,d_subsequent,d_to_invariant` |
//! | `path.csv` | `epoch,step,x1..xd`: trajectory of the tracked particle |
//! | `clouds/epoch{k}_step{s}.txt` | particle clouds (step 0, snapshots, last step) |
//! | `invariant/epoch{k}.txt` | invariant-measure estimates |
//! | `histograms/epoch{k}.csv` | `ix,iy,x_lo,x_hi,y_lo,y_hi,mass` |
//! | `bounds.json`, `bounds.txt` | bound report |
//! | `bound_iterates.csv` | `epoch,step,lower,upper,truncation` |
//! | `figures/*.svg` | support, heat maps, distance decay |
//! | `manifest.json` | size and SHA-256 of every file above |

use std::path::{Path, PathBuf};

use ipsrf::measure::{write_cloud_table, write_measure_table, Histogram};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::BoundsOutcome;
use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};
use crate::experiment::{EpochArtifacts, RunArtifacts};
use crate::figures::{epoch_colour, heatmap_svg, log_line_plot_svg, support_svg, Series};

pub const MANIFEST: &str = "manifest.json";

pub fn generator() -> String {
    format!("ipsrf {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub seed: u64,
    pub data: Vec<FileEntry>,
    pub figures: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Files whose size or hash no longer match, with a reason each.
    pub fn verify(&self, dir: &Path) -> CliResult<Vec<String>> {
        let mut problems = Vec::new();
        for entry in self.data.iter().chain(&self.figures) {
            let path = dir.join(&entry.path);
            match std::fs::read(&path) {
                Ok(bytes) if sha256_hex(&bytes) == entry.sha256 => {}
                Ok(_) => problems.push(format!("{}: hash mismatch", entry.path)),
                Err(e) => problems.push(format!("{}: {e}", entry.path)),
            }
        }
        Ok(problems)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under a root directory and remembers their hashes.
pub struct ArtifactWriter {
    root: PathBuf,
    data: Vec<FileEntry>,
    figures: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            data: Vec::new(),
            figures: Vec::new(),
        })
    }

    fn put(&self, rel: &str, bytes: &[u8]) -> CliResult<FileEntry> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(FileEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        })
    }

    pub fn data(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let entry = self.put(rel, bytes)?;
        self.data.push(entry);
        Ok(())
    }

    pub fn figure(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let entry = self.put(rel, bytes)?;
        self.figures.push(entry);
        Ok(())
    }

    pub fn finish(mut self, seed: u64) -> CliResult<Manifest> {
        self.data.sort_by(|a, b| a.path.cmp(&b.path));
        self.figures.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            generator: generator(),
            seed,
            data: self.data,
            figures: self.figures,
        };
        let path = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub atoms: usize,
    pub residual: f64,
    pub distance_bound: f64,
    pub iterations: usize,
    pub cell: f64,
    /// Atoms left on the distance grid, and the merge displacement.
    pub grid_atoms: usize,
    pub grid_displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub length: usize,
    pub weights: Vec<f64>,
    pub r: f64,
    pub invariant: InvariantSummary,
    pub series_points: usize,
    pub final_d_to_invariant: f64,
    /// Mean and spread of `d_to_invariant` over the second half of the epoch,
    /// where the particle cloud has settled; this is the Monte Carlo noise floor.
    pub plateau_mean: f64,
    pub plateau_std: f64,
    pub slack_subsequent: f64,
    pub slack_to_invariant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub generator: String,
    pub seed: u64,
    pub particles: usize,
    pub subsample: usize,
    pub dimension: usize,
    pub tv_steps: Vec<f64>,
    pub epochs: Vec<EpochSummary>,
    pub bounds_all_satisfied: bool,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn epoch_summary(e: &EpochArtifacts, length: usize, weights: &[f64]) -> EpochSummary {
    let plateau: Vec<f64> = e
        .series
        .iter()
        .filter(|r| 2 * r.step > length)
        .map(|r| r.d_to_invariant)
        .collect();
    let (plateau_mean, plateau_std) = mean_std(&plateau);
    EpochSummary {
        epoch: e.epoch,
        length,
        weights: weights.to_vec(),
        r: e.r,
        invariant: InvariantSummary {
            atoms: e.invariant.measure.len(),
            residual: e.invariant.residual,
            distance_bound: e.invariant.distance_bound,
            iterations: e.invariant.iterations,
            cell: e.invariant.cell,
            grid_atoms: e.invariant_grid.measure.len(),
            grid_displacement: e.invariant_grid.displacement,
        },
        series_points: e.series.len(),
        final_d_to_invariant: e.series.last().map_or(0.0, |r| r.d_to_invariant),
        plateau_mean,
        plateau_std,
        slack_subsequent: e.slack_subsequent,
        slack_to_invariant: e.slack_to_invariant,
    }
}

pub fn summarize(run: &RunArtifacts) -> Summary {
    let epochs = run.validated.schedule.epochs();
    Summary {
        schema_version: SCHEMA_VERSION,
        generator: generator(),
        seed: run.config.seed,
        particles: run.config.simulation.particles,
        subsample: run.config.distances.subsample,
        dimension: run.validated.family.dimension(),
        tv_steps: run.validated.report.steps.iter().map(|s| s.distance).collect(),
        epochs: run
            .epochs
            .iter()
            .zip(epochs)
            .map(|(e, ep)| epoch_summary(e, ep.length, ep.measure.weights()))
            .collect(),
        bounds_all_satisfied: run.bounds.report.all_satisfied(),
    }
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Numerical(format!("csv encoding: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv encoding: {e}")))
}

fn histogram_csv(hist: &Histogram) -> CliResult<Vec<u8>> {
    let g = &hist.grid;
    let wx = (g.x_max - g.x_min) / g.bins_x as f64;
    let wy = (g.y_max - g.y_min) / g.bins_y as f64;
    let mut rows = Vec::with_capacity(hist.masses.len());
    for iy in 0..g.bins_y {
        for ix in 0..g.bins_x {
            let x = g.x_min + ix as f64 * wx;
            let y = g.y_min + iy as f64 * wy;
            rows.push((ix, iy, x, x + wx, y, y + wy, hist.mass(ix, iy)));
        }
    }
    csv_bytes(&rows, &["ix", "iy", "x_lo", "x_hi", "y_lo", "y_hi", "mass"])
}

fn path_csv(run: &RunArtifacts) -> CliResult<Vec<u8>> {
    let d = run.validated.family.dimension();
    let mut header = vec!["epoch".to_string(), "step".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Numerical(format!("csv encoding: {e}"));
    w.write_record(&header).map_err(fail)?;
    for e in &run.epochs {
        for (i, p) in e.path.chunks_exact(d).enumerate() {
            let mut rec = vec![e.epoch.to_string(), (i + 1).to_string()];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(fail)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv encoding: {e}")))
}

fn json(value: &impl Serialize) -> Vec<u8> {
    (serde_json::to_string_pretty(value).expect("serializable") + "\n").into_bytes()
}

/// Writes the bound report files; shared by `run` and `analyze`.
pub fn write_bounds(w: &mut ArtifactWriter, bounds: &BoundsOutcome) -> CliResult<()> {
    w.data("bounds.json", &json(bounds))?;
    w.data("bounds.txt", bounds.report.to_table().as_bytes())?;
    w.data(
        "bound_iterates.csv",
        &csv_bytes(&bounds.iterates, &["epoch", "step", "lower", "upper", "truncation"])?,
    )
}

/// Writes every artifact of `run` below `dir`; figures only when `figures` is set.
pub fn write_run(run: &RunArtifacts, dir: &Path, figures: bool) -> CliResult<Manifest> {
    let mut w = ArtifactWriter::new(dir)?;
    w.data("config.json", run.config.to_json().as_bytes())?;
    w.data("summary.json", &json(&summarize(run)))?;

    let rows: Vec<_> = run.epochs.iter().flat_map(|e| e.series.iter().copied()).collect();
    w.data(
        "distances.csv",
        &csv_bytes(&rows, &["epoch", "step", "d_subsequent", "d_to_invariant"])?,
    )?;
    w.data("path.csv", &path_csv(run)?)?;
    let lengths: Vec<usize> = run.validated.schedule.epochs().iter().map(|e| e.length).collect();
    for e in &run.epochs {
        let k = e.epoch;
        w.data(&format!("clouds/epoch{k}_step0.txt"), write_cloud_table(&e.start).as_bytes())?;
        for snap in e.snapshots.iter().filter(|c| c.step < lengths[k]) {
            w.data(&format!("clouds/epoch{k}_step{}.txt", snap.step), write_cloud_table(snap).as_bytes())?;
        }
        w.data(
            &format!("clouds/epoch{k}_step{}.txt", lengths[k]),
            write_cloud_table(&e.last).as_bytes(),
        )?;
        w.data(&format!("invariant/epoch{k}.txt"), write_measure_table(&e.invariant.measure).as_bytes())?;
        if let Some(h) = &e.histogram {
            w.data(&format!("histograms/epoch{k}.csv"), &histogram_csv(h)?)?;
        }
    }
    write_bounds(&mut w, &run.bounds)?;

    if figures && !run.epochs.is_empty() && run.validated.family.dimension() == 2 {
        emit_figures(run, &mut w)?;
    }
    w.finish(run.config.seed)
}

/// Support raster, heat maps and the two distance-decay plots.
pub fn emit_figures(run: &RunArtifacts, w: &mut ArtifactWriter) -> CliResult<()> {
    let fig = &run.config.figures;
    let paths: Vec<&[f64]> = run.epochs.iter().map(|e| e.path.as_slice()).collect();
    let svg = support_svg(&paths, &fig.grid, fig.scatter_pixels, "Sample-path support per epoch");
    w.figure("figures/support.svg", svg.as_bytes())?;
    for e in &run.epochs {
        if let Some(h) = &e.histogram {
            let svg = heatmap_svg(h, &format!("Occupation histogram, epoch {}", e.epoch));
            w.figure(&format!("figures/histogram_epoch{}.svg", e.epoch), svg.as_bytes())?;
        }
    }
    let mut offset = 0.0;
    let mut marks = Vec::new();
    let mut sub = Vec::new();
    let mut inv = Vec::new();
    for (e, ep) in run.epochs.iter().zip(run.validated.schedule.epochs()) {
        let colour = epoch_colour(e.epoch);
        let label = format!("epoch {}", e.epoch);
        let pick = |f: fn(&crate::experiment::DistanceRow) -> f64| {
            e.series.iter().map(|r| (offset + r.step as f64, f(r))).collect::<Vec<_>>()
        };
        sub.push(Series { label: label.clone(), colour, points: pick(|r| r.d_subsequent) });
        inv.push(Series { label, colour, points: pick(|r| r.d_to_invariant) });
        offset += ep.length as f64;
        marks.push(offset);
    }
    let svg = log_line_plot_svg(&sub, &marks, "Distance between subsequent measures", "step", "W1(nu^s, nu^(s-1))");
    w.figure("figures/d_subsequent.svg", svg.as_bytes())?;
    let svg = log_line_plot_svg(&inv, &marks, "Distance to the invariant measure", "step", "W1(nu^s, nu*)");
    w.figure("figures/d_to_invariant.svg", svg.as_bytes())
}
