use serde::Serialize;

use crate::error::{Error, Result};

/// Rectangle `[x_min, x_max] x [y_min, y_max]` split into `bins_x * bins_y` cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct HistogramGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub bins_x: usize,
    pub bins_y: usize,
}

/// Bin masses, row-major with rows indexed by `y`: `masses[iy * bins_x + ix]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub grid: HistogramGrid,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn mass(&self, ix: usize, iy: usize) -> f64 {
        self.masses[iy * self.grid.bins_x + ix]
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Fraction of the planar `points` (flattened pairs) falling in each bin.
/// Points outside the rectangle are counted in the denominator only; the
/// upper edges are closed.
pub fn histogram_density(points: &[f64], grid: &HistogramGrid) -> Result<Histogram> {
    if grid.bins_x == 0 || grid.bins_y == 0 {
        return Err(Error::invalid("histogram needs at least one bin per axis"));
    }
    if !(grid.x_max > grid.x_min && grid.y_max > grid.y_min) {
        return Err(Error::invalid("histogram bounds are empty"));
    }
    if !points.len().is_multiple_of(2) {
        return Err(Error::invalid("histogram input must be planar points"));
    }
    let n = points.len() / 2;
    let mut masses = vec![0.0; grid.bins_x * grid.bins_y];
    if n == 0 {
        return Ok(Histogram { grid: *grid, masses });
    }
    let unit = 1.0 / n as f64;
    let sx = grid.bins_x as f64 / (grid.x_max - grid.x_min);
    let sy = grid.bins_y as f64 / (grid.y_max - grid.y_min);
    for p in points.chunks_exact(2) {
        let (x, y) = (p[0], p[1]);
        if !(x >= grid.x_min && x <= grid.x_max && y >= grid.y_min && y <= grid.y_max) {
            continue;
        }
        let ix = (((x - grid.x_min) * sx) as usize).min(grid.bins_x - 1);
        let iy = (((y - grid.y_min) * sy) as usize).min(grid.bins_y - 1);
        masses[iy * grid.bins_x + ix] += unit;
    }
    Ok(Histogram { grid: *grid, masses })
}
