//! Discrete probability measures on `R^d` and the dual Markov operator.
//!
//! The exact push-forward of a measure with `n` atoms under a family of `m`
//! maps has up to `n m` atoms, so repeated application is paired with grid
//! merging ([`Truncation`]). Every merge reports the transport cost it
//! incurred, which bounds the Wasserstein error introduced.

mod grid;
mod histogram;
mod invariant;
mod particles;
mod table;

pub use grid::{quantize, quantize_jointly, Quantized, Snap};
pub use histogram::{histogram_density, Histogram, HistogramGrid};
pub use invariant::{
    estimate_invariant_measure, estimate_invariant_measure_with, EstimatorOptions,
    InvariantEstimate,
};
pub use particles::{
    simulate_epoch, simulate_epoch_recorded, EpochRecording, ParticleCloud, RecordPlan,
};
pub use table::{
    parse_cloud_table, parse_measure_table, read_measure_table, write_cloud_table,
    write_measure_table,
};

use crate::error::{Error, Result};
use crate::maps::MapFamily;
use crate::schedule::SamplingMeasure;
use grid::{merge_exact, CellKey};

/// Tolerance on total mass for measures built from user data.
pub const MASS_TOL: f64 = 1e-9;

/// Weighted atoms in `R^d`, weights positive and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from flattened points (`n * dim` values) and positive
    /// weights. Weights are normalised to total mass one and exactly repeated
    /// points are merged.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::invalid(format!(
                "{} coordinates do not match {} atoms of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("atom coordinates must be finite"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("atom weights must be finite and positive"));
        }
        let total: f64 = weights.iter().sum();
        let (points, mut weights) = merge_exact(
            dim,
            points
                .chunks_exact(dim)
                .zip(&weights)
                .map(|(x, &w)| (CellKey::exact(x), x.to_vec(), w)),
        );
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn dirac(x: &[f64]) -> Self {
        assert!(!x.is_empty() && x.iter().all(|v| v.is_finite()));
        Self {
            dim: x.len(),
            points: x.to_vec(),
            weights: vec![1.0],
        }
    }

    /// Equal weights on the given points (duplicates merged).
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len().checked_div(dim).unwrap_or(0);
        Self::new(dim, points, vec![1.0; n])
    }

    /// Caller guarantees validity (distinct points, weights summing to one).
    pub(crate) fn from_parts_unchecked(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), weights.len() * dim);
        Self {
            dim,
            points,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.atoms() {
            for (a, v) in m.iter_mut().zip(x) {
                *a += w * v;
            }
        }
        m
    }

    /// Componentwise `(min, max)` of the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for (x, _) in self.atoms() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }

    /// Diagonal of the bounding box: an upper bound on the support diameter.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        crate::maps::distance(&lo, &hi)
    }
}

/// Atom-count control applied after each push-forward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    /// Merge atoms on a grid with this cell side.
    pub merge_cell: Option<f64>,
    /// Coarsen the grid by factors of two until at most this many atoms remain.
    pub max_atoms: Option<usize>,
}

/// Default merge cell as a fraction of the absorbing-ball diameter.
pub const DEFAULT_MERGE_FRACTION: f64 = 1e-4;
pub const DEFAULT_MAX_ATOMS: usize = 100_000;

impl Truncation {
    /// No merging beyond exact duplicates.
    pub fn exact() -> Self {
        Self {
            merge_cell: None,
            max_atoms: None,
        }
    }

    /// Merge cell `1e-4` of the absorbing diameter, cap `10^5` atoms.
    pub fn for_family(family: &MapFamily) -> Self {
        let merge_cell = family
            .absorbing_radius()
            .filter(|r| *r > 0.0)
            .map(|r| DEFAULT_MERGE_FRACTION * 2.0 * r);
        Self {
            merge_cell,
            max_atoms: Some(DEFAULT_MAX_ATOMS),
        }
    }
}

/// Result of one application of the dual operator.
#[derive(Clone, Debug)]
pub struct PushForward {
    pub measure: DiscreteMeasure,
    /// Upper bound on `W1` between the exact push-forward and `measure`.
    pub displacement: f64,
}

/// `P* nu = sum_j mu(j) nu o f_j^{-1}`: atoms `f_j(x_i)` with weight
/// `mu(j) w_i`, followed by the requested truncation.
pub fn push_forward(
    nu: &DiscreteMeasure,
    family: &MapFamily,
    mu: &SamplingMeasure,
    truncation: &Truncation,
) -> Result<PushForward> {
    check_compat(nu, family, mu)?;
    let exact = push_forward_raw(nu, family, mu);
    Ok(truncate(exact, truncation))
}

/// Exact push-forward with only exact duplicates merged.
pub fn push_forward_exact(
    nu: &DiscreteMeasure,
    family: &MapFamily,
    mu: &SamplingMeasure,
) -> Result<DiscreteMeasure> {
    Ok(push_forward(nu, family, mu, &Truncation::exact())?.measure)
}

pub(crate) fn check_compat(
    nu: &DiscreteMeasure,
    family: &MapFamily,
    mu: &SamplingMeasure,
) -> Result<()> {
    if mu.len() != family.len() {
        return Err(Error::invalid(format!(
            "sampling measure has {} weights, family has {} maps",
            mu.len(),
            family.len()
        )));
    }
    if nu.dim() != family.dimension() {
        return Err(Error::invalid(format!(
            "measure dimension {} differs from family dimension {}",
            nu.dim(),
            family.dimension()
        )));
    }
    Ok(())
}

fn push_forward_raw(nu: &DiscreteMeasure, family: &MapFamily, mu: &SamplingMeasure) -> DiscreteMeasure {
    let d = nu.dim();
    let active: Vec<(usize, f64)> = mu
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(j, w)| (j, *w))
        .collect();
    let maps: Vec<_> = family.iter().collect();
    let mut points = vec![0.0; nu.len() * active.len() * d];
    let mut weights = Vec::with_capacity(nu.len() * active.len());
    let mut slot = 0;
    for (x, w) in nu.atoms() {
        for &(j, pj) in &active {
            maps[j].apply_into(x, &mut points[slot * d..(slot + 1) * d]);
            weights.push(w * pj);
            slot += 1;
        }
    }
    // merge coincident images and absorb rounding drift in the total mass
    let (points, mut weights) = merge_exact(
        d,
        points
            .chunks_exact(d)
            .zip(weights)
            .map(|(x, w)| (CellKey::exact(x), x.to_vec(), w)),
    );
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    DiscreteMeasure::from_parts_unchecked(d, points, weights)
}

fn truncate(exact: DiscreteMeasure, truncation: &Truncation) -> PushForward {
    let over_cap = |m: &DiscreteMeasure| truncation.max_atoms.is_some_and(|cap| m.len() > cap);
    let start = match truncation.merge_cell {
        Some(cell) => cell,
        None if over_cap(&exact) => {
            let cap = truncation.max_atoms.unwrap_or(1).max(1) as f64;
            let scale = exact.extent().max(f64::MIN_POSITIVE);
            scale / cap.powf(1.0 / exact.dim() as f64)
        }
        None => {
            return PushForward {
                measure: exact,
                displacement: 0.0,
            }
        }
    };
    let mut cell = start;
    loop {
        let q = quantize(&exact, cell, Snap::Centroid, 1.0);
        if !over_cap(&q.measure) {
            return PushForward {
                measure: q.measure,
                displacement: q.displacement,
            };
        }
        cell *= 2.0;
    }
}

/// Iterates of the dual operator with accumulated truncation error.
#[derive(Clone, Debug)]
pub struct IterateTrace {
    /// `measures[i]` approximates the `i`-th exact iterate.
    pub measures: Vec<DiscreteMeasure>,
    /// `error_bound[i]` bounds `W1` between `measures[i]` and the exact iterate.
    pub error_bound: Vec<f64>,
}

/// Applies the dual operator `steps` times starting from `start`.
///
/// Errors accumulate as `E_i = r E_{i-1} + displacement_i`, where `r` is the
/// averaged Lipschitz factor (the operator is `r`-Lipschitz in `W1`).
pub fn iterate_push_forward(
    start: &DiscreteMeasure,
    family: &MapFamily,
    mu: &SamplingMeasure,
    steps: usize,
    truncation: &Truncation,
) -> Result<IterateTrace> {
    check_compat(start, family, mu)?;
    let r: f64 = mu
        .weights()
        .iter()
        .zip(family.lipschitz_constants())
        .map(|(w, l)| w * l)
        .sum();
    let mut measures = vec![start.clone()];
    let mut error_bound = vec![0.0];
    for i in 0..steps {
        let next = push_forward(&measures[i], family, mu, truncation)?;
        error_bound.push(r * error_bound[i] + next.displacement);
        measures.push(next.measure);
    }
    Ok(IterateTrace {
        measures,
        error_bound,
    })
}

/// Uniform mixture `(1/N) sum_j nu_j`, atoms merged.
pub fn cesaro_average(measures: &[DiscreteMeasure]) -> Result<DiscreteMeasure> {
    let first = measures
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty list of measures"))?;
    let d = first.dim();
    if measures.iter().any(|m| m.dim() != d) {
        return Err(Error::invalid("measures have different dimensions"));
    }
    let n = measures.len() as f64;
    let (points, mut weights) = merge_exact(
        d,
        measures
            .iter()
            .flat_map(|m| m.atoms())
            .map(|(x, w)| (CellKey::exact(x), x.to_vec(), w / n)),
    );
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(DiscreteMeasure::from_parts_unchecked(d, points, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{maple_leaf, AffineMap};
    use crate::schedule::maple_leaf_measures;
    use proptest::prelude::*;

    #[test]
    fn construction_normalises_and_merges() {
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0, 0.0, -0.0], vec![1.0, 2.0, 1.0, 4.0]).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        assert_eq!(m.weights(), &[0.75, 0.25]);
        assert!(DiscreteMeasure::new(1, vec![0.0], vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(1, vec![f64::NAN], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(2, vec![0.0], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(1, vec![], vec![]).is_err());
    }

    #[test]
    fn dirac_push_forward() {
        let fam = maple_leaf();
        let [mu, ..] = maple_leaf_measures();
        let x = [0.3, -0.2];
        let out = push_forward_exact(&DiscreteMeasure::dirac(&x), &fam, &mu).unwrap();
        assert_eq!(out.len(), 4);
        for (j, f) in fam.iter().enumerate() {
            let mut y = [0.0; 2];
            f.apply_into(&x, &mut y);
            let i = (0..4).find(|&i| out.point(i) == y).expect("image present");
            assert!((out.weight(i) - mu.weights()[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_atoms_two_maps() {
        let f = AffineMap::new(vec![0.5], vec![0.0]).unwrap();
        let g = AffineMap::new(vec![0.5], vec![10.0]).unwrap();
        let fam = MapFamily::from_affine(vec![f, g]).unwrap();
        let mu = SamplingMeasure::uniform(2).unwrap();
        let nu = DiscreteMeasure::uniform(1, vec![1.0, 3.0]).unwrap();
        let out = push_forward_exact(&nu, &fam, &mu).unwrap();
        let mut pts: Vec<f64> = out.points().to_vec();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![0.5, 1.5, 10.5, 11.5]);
        assert!(out.weights().iter().all(|w| *w == 0.25));
    }

    #[test]
    fn compat_errors() {
        let fam = maple_leaf();
        let mu3 = SamplingMeasure::uniform(3).unwrap();
        let [mu, ..] = maple_leaf_measures();
        let nu = DiscreteMeasure::dirac(&[0.0, 0.0]);
        assert!(push_forward_exact(&nu, &fam, &mu3).is_err());
        assert!(push_forward_exact(&DiscreteMeasure::dirac(&[0.0]), &fam, &mu).is_err());
    }

    #[test]
    fn truncation_caps_atoms_and_reports_cost() {
        let fam = maple_leaf();
        let [mu, ..] = maple_leaf_measures();
        let trunc = Truncation {
            merge_cell: None,
            max_atoms: Some(50),
        };
        let trace = iterate_push_forward(&DiscreteMeasure::dirac(&[0.0, 0.0]), &fam, &mu, 6, &trunc).unwrap();
        for (m, e) in trace.measures.iter().zip(&trace.error_bound) {
            assert!(m.len() <= 50);
            assert!((m.total_mass() - 1.0).abs() < 1e-12);
            assert!(*e >= 0.0);
        }
        assert!(trace.error_bound[6] > 0.0);
        assert_eq!(trace.error_bound[2], 0.0);
    }

    #[test]
    fn cesaro_examples() {
        let a = DiscreteMeasure::dirac(&[1.0, 2.0]);
        assert_eq!(cesaro_average(std::slice::from_ref(&a)).unwrap(), a);
        let b = DiscreteMeasure::dirac(&[3.0, 4.0]);
        let avg = cesaro_average(&[a.clone(), b]).unwrap();
        assert_eq!(avg.len(), 2);
        assert_eq!(avg.weights(), &[0.5, 0.5]);
        assert!(cesaro_average(&[]).is_err());
        assert!(cesaro_average(&[a, DiscreteMeasure::dirac(&[0.0])]).is_err());
    }

    fn random_measure() -> impl Strategy<Value = DiscreteMeasure> {
        prop::collection::vec(((-1.0f64..1.0, -1.0f64..1.0), 0.01f64..1.0), 1..12).prop_map(|atoms| {
            let pts = atoms.iter().flat_map(|((x, y), _)| [*x, *y]).collect();
            let w = atoms.iter().map(|(_, w)| *w).collect();
            DiscreteMeasure::new(2, pts, w).unwrap()
        })
    }

    proptest! {
        #[test]
        fn push_forward_conserves_mass(nu in random_measure(), k in 0usize..3) {
            let fam = maple_leaf();
            let mu = &maple_leaf_measures()[k];
            let out = push_forward_exact(&nu, &fam, mu).unwrap();
            prop_assert!((out.total_mass() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn push_forward_stays_in_absorbing_ball(nu in random_measure()) {
            let fam = maple_leaf();
            let r = fam.absorbing_radius().unwrap();
            let mu = &maple_leaf_measures()[1];
            let out = push_forward(&nu, &fam, mu, &Truncation::for_family(&fam)).unwrap();
            for (x, _) in out.measure.atoms() {
                prop_assert!(crate::maps::norm(x) <= r + 1e-9);
            }
        }
    }
}
