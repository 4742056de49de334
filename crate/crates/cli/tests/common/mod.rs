#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ipsrf_cli::ExperimentConfig;

pub fn example_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/maple_leaf.json")
}

/// The maple-leaf experiment shrunk to run in well under a second.
pub fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::maple_leaf();
    for ep in &mut cfg.schedule.epochs {
        ep.length = 400;
    }
    cfg.seed = 11;
    cfg.simulation.particles = 300;
    cfg.simulation.snapshot_steps = vec![1, 10, 100];
    cfg.estimator.tol = 1e-2;
    cfg.distances.cadence = 50;
    cfg.distances.dense_prefix = 5;
    cfg.distances.subsample = 300;
    cfg.distances.grid_cell = 0.05;
    cfg.bounds.iterate_steps = 4;
    cfg.bounds.atom_cap = 300;
    cfg.figures.grid.bins_x = 16;
    cfg.figures.grid.bins_y = 16;
    cfg.figures.scatter_pixels = 64;
    cfg
}

pub fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}
