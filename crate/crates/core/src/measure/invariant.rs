//! Certified estimation of the invariant measure of a contractive family.
//!
//! The dual operator is iterated on measures supported on the centres of a
//! uniform grid: each image atom `f_j(c)` is moved to the centre of its cell.
//! On a fixed grid this is a finite Markov chain on cells, so the weights
//! settle. For the current measure `nu` (weights `w`) and its snapped image
//! `w'`,
//!
//! ```text
//! W1(nu, P* nu) <= sum_c w_c sum_j mu_j |f_j(c) - snap(f_j(c))|  +  |w' - w|_1 / 2 * extent
//! ```
//!
//! where the first term is the cost of the snapping coupling and the second
//! moves the mass difference anywhere within the support. Once this residual
//! drops below `tol (1 - r)` the a-posteriori inequality gives
//! `W1(nu, nu*) <= tol`. When the snapping term alone is too large the grid
//! is halved and iteration continues from the current weights.

use rustc_hash::FxHashMap;

use super::grid::CellKey;
use super::{check_compat, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::maps::{distance, LipschitzMap, MapFamily};
use crate::schedule::SamplingMeasure;

#[derive(Clone, Debug)]
pub struct EstimatorOptions {
    /// Starting measure; defaults to a point mass at the origin.
    pub initial: Option<DiscreteMeasure>,
    /// Starting cell side; defaults to `2 tol (1 - r)`.
    pub initial_cell: Option<f64>,
    /// Refuse to grow the cell graph beyond this many cells.
    pub max_cells: usize,
}

pub const DEFAULT_MAX_CELLS: usize = 2_000_000;

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            initial: None,
            initial_cell: None,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InvariantEstimate {
    pub measure: DiscreteMeasure,
    /// Certified upper bound on `W1(nu, P* nu)`.
    pub residual: f64,
    /// `residual / (1 - r)`, an upper bound on `W1(nu, nu*)`.
    pub distance_bound: f64,
    pub contraction: f64,
    /// Number of operator applications.
    pub iterations: usize,
    /// Final grid cell side.
    pub cell: f64,
}

pub fn estimate_invariant_measure(
    family: &MapFamily,
    mu: &SamplingMeasure,
    tol: f64,
    max_iter: usize,
) -> Result<InvariantEstimate> {
    estimate_invariant_measure_with(family, mu, tol, max_iter, &EstimatorOptions::default())
}

pub fn estimate_invariant_measure_with(
    family: &MapFamily,
    mu: &SamplingMeasure,
    tol: f64,
    max_iter: usize,
    opts: &EstimatorOptions,
) -> Result<InvariantEstimate> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let d = family.dimension();
    let origin = DiscreteMeasure::dirac(&vec![0.0; d]);
    let initial = opts.initial.as_ref().unwrap_or(&origin);
    check_compat(initial, family, mu)?;
    let r: f64 = mu
        .weights()
        .iter()
        .zip(family.lipschitz_constants())
        .map(|(w, l)| w * l)
        .sum();
    if r >= 1.0 {
        return Err(Error::NotContractive { r });
    }
    let target = tol * (1.0 - r);
    let mut cell = opts.initial_cell.unwrap_or(2.0 * target);
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::invalid("initial cell must be positive"));
    }

    let mut graph = CellGraph::new(family, mu, cell);
    let mut w = graph.snap_measure(initial);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < max_iter {
        if graph.len() > opts.max_cells {
            return Err(Error::ConvergenceFailure {
                iterations,
                residual,
            });
        }
        let next = graph.step(&w);
        iterations += 1;
        w.resize(graph.len(), 0.0);

        let snap_cost: f64 = w.iter().zip(&graph.snap_cost).map(|(a, b)| a * b).sum();
        let l1: f64 = w.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        let mixing = 0.5 * l1 * graph.extent(&w, &next);
        residual = snap_cost + mixing;

        if residual <= target {
            let measure = graph.to_measure(&w);
            return Ok(InvariantEstimate {
                measure,
                residual,
                distance_bound: residual / (1.0 - r),
                contraction: r,
                iterations,
                cell,
            });
        }
        if snap_cost > 0.9 * target && mixing < 0.1 * target {
            // the grid itself is too coarse; refine and carry the weights over
            let current = graph.to_measure(&next);
            cell *= 0.5;
            graph = CellGraph::new(family, mu, cell);
            w = graph.snap_measure(&current);
        } else {
            w = next;
        }
    }
    Err(Error::ConvergenceFailure {
        iterations,
        residual,
    })
}

struct CellGraph<'a> {
    d: usize,
    cell: f64,
    maps: Vec<(&'a dyn LipschitzMap, f64)>,
    index: FxHashMap<CellKey, u32>,
    centers: Vec<f64>,
    /// `targets[c * k + j]`, `u32::MAX` until cell `c` is expanded.
    targets: Vec<u32>,
    /// Per-cell expected snapping distance `sum_j mu_j |f_j(c) - snap(f_j(c))|`.
    snap_cost: Vec<f64>,
}

impl<'a> CellGraph<'a> {
    fn new(family: &'a MapFamily, mu: &SamplingMeasure, cell: f64) -> Self {
        let maps = family
            .iter()
            .zip(mu.weights())
            .filter(|(_, p)| **p > 0.0)
            .map(|(f, p)| (f, *p))
            .collect();
        Self {
            d: family.dimension(),
            cell,
            maps,
            index: FxHashMap::default(),
            centers: Vec::new(),
            targets: Vec::new(),
            snap_cost: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.snap_cost.len()
    }

    fn cell_of(&mut self, x: &[f64]) -> u32 {
        let key = CellKey::cell_of(x, self.cell);
        if let Some(&c) = self.index.get(&key) {
            return c;
        }
        let c = self.len() as u32;
        let start = self.centers.len();
        self.centers.resize(start + self.d, 0.0);
        key.center(self.d, self.cell, &mut self.centers[start..]);
        self.targets
            .extend(std::iter::repeat_n(u32::MAX, self.maps.len()));
        self.snap_cost.push(0.0);
        self.index.insert(key, c);
        c
    }

    fn expand(&mut self, c: usize) {
        let k = self.maps.len();
        if self.targets[c * k] != u32::MAX {
            return;
        }
        let d = self.d;
        let x = self.centers[c * d..(c + 1) * d].to_vec();
        let mut y = vec![0.0; d];
        let mut cost = 0.0;
        for j in 0..k {
            let (f, p) = self.maps[j];
            f.apply_into(&x, &mut y);
            let t = self.cell_of(&y) as usize;
            cost += p * distance(&y, &self.centers[t * d..(t + 1) * d]);
            self.targets[c * k + j] = t as u32;
        }
        self.snap_cost[c] = cost;
    }

    fn snap_measure(&mut self, nu: &DiscreteMeasure) -> Vec<f64> {
        let cells: Vec<u32> = nu.atoms().map(|(x, _)| self.cell_of(x)).collect();
        let mut w = vec![0.0; self.len()];
        for (c, wt) in cells.into_iter().zip(nu.weights()) {
            w[c as usize] += wt;
        }
        w
    }

    /// Snapped push-forward of `w`; expands cells as needed.
    fn step(&mut self, w: &[f64]) -> Vec<f64> {
        let k = self.maps.len();
        for (c, &wc) in w.iter().enumerate() {
            if wc > 0.0 {
                self.expand(c);
            }
        }
        let mut next = vec![0.0; self.len()];
        for (c, &wc) in w.iter().enumerate() {
            if wc > 0.0 {
                for j in 0..k {
                    next[self.targets[c * k + j] as usize] += wc * self.maps[j].1;
                }
            }
        }
        let total: f64 = next.iter().sum();
        for v in &mut next {
            *v /= total;
        }
        next
    }

    /// Bounding-box diagonal of the cells charged by either weight vector.
    fn extent(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in 0..self.len() {
            if a[c] > 0.0 || b[c] > 0.0 {
                for k in 0..d {
                    let v = self.centers[c * d + k];
                    lo[k] = lo[k].min(v);
                    hi[k] = hi[k].max(v);
                }
            }
        }
        if lo[0] > hi[0] {
            return 0.0;
        }
        distance(&lo, &hi)
    }

    fn to_measure(&self, w: &[f64]) -> DiscreteMeasure {
        let d = self.d;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (c, &wc) in w.iter().enumerate() {
            if wc > 0.0 {
                points.extend_from_slice(&self.centers[c * d..(c + 1) * d]);
                weights.push(wc);
            }
        }
        let total: f64 = weights.iter().sum();
        for v in &mut weights {
            *v /= total;
        }
        DiscreteMeasure::from_parts_unchecked(d, points, weights)
    }
}
