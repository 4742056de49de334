//! Uniform grids used to merge atoms.
//!
//! Cell `k` along each axis is `[(k - 1/2) h, (k + 1/2) h)`, so cell centres
//! sit on the lattice `h Z^d` and the origin is always a centre.

use std::hash::Hash;

use rustc_hash::FxHashMap;

use super::DiscreteMeasure;
use crate::maps::distance;

/// Hashable integer coordinates of a cell (or of an exact point's bit pattern).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum CellKey {
    Small([i64; 4]),
    Large(Box<[i64]>),
}

impl CellKey {
    pub(crate) fn from_iter(d: usize, coords: impl Iterator<Item = i64>) -> Self {
        if d <= 4 {
            let mut k = [0i64; 4];
            for (slot, c) in k.iter_mut().zip(coords) {
                *slot = c;
            }
            CellKey::Small(k)
        } else {
            CellKey::Large(coords.collect())
        }
    }

    pub(crate) fn cell_of(x: &[f64], cell: f64) -> Self {
        Self::from_iter(x.len(), x.iter().map(|v| (v / cell).round() as i64))
    }

    /// Exact-identity key; `-0.0` and `0.0` collapse.
    pub(crate) fn exact(x: &[f64]) -> Self {
        Self::from_iter(
            x.len(),
            x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() as i64 }),
        )
    }

    pub(crate) fn center(&self, d: usize, cell: f64, out: &mut [f64]) {
        let coords: &[i64] = match self {
            CellKey::Small(k) => &k[..d],
            CellKey::Large(k) => k,
        };
        for (o, c) in out.iter_mut().zip(coords) {
            *o = *c as f64 * cell;
        }
    }
}

/// Where merged mass is placed inside a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Snap {
    /// Mass-weighted centroid of the merged atoms (preserves the mean).
    Centroid,
    /// The lattice point at the cell centre.
    Center,
}

/// A merged measure and the cost of the merge.
#[derive(Clone, Debug)]
pub struct Quantized {
    pub measure: DiscreteMeasure,
    /// `sum_i w_i |x_i - q(x_i)|^alpha`: the cost of the coupling that moves
    /// every atom to its representative, hence an upper bound on `W_alpha`
    /// between the input and the output.
    pub displacement: f64,
    pub cell: f64,
}

/// Merges atoms that share a grid cell.
pub fn quantize(nu: &DiscreteMeasure, cell: f64, snap: Snap, alpha: f64) -> Quantized {
    assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
    let d = nu.dim();
    let mut index: FxHashMap<CellKey, usize> = FxHashMap::default();
    index.reserve(nu.len().min(1 << 20));
    let mut keys: Vec<CellKey> = Vec::new();
    let mut acc: Vec<f64> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    let mut owner: Vec<usize> = Vec::with_capacity(nu.len());

    for (x, w) in nu.atoms() {
        let key = CellKey::cell_of(x, cell);
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            acc.extend(std::iter::repeat_n(0.0, d));
            mass.push(0.0);
            mass.len() - 1
        });
        if snap == Snap::Centroid {
            for (a, v) in acc[slot * d..(slot + 1) * d].iter_mut().zip(x) {
                *a += w * v;
            }
        }
        mass[slot] += w;
        owner.push(slot);
    }

    let mut points = vec![0.0; keys.len() * d];
    for (slot, key) in keys.iter().enumerate() {
        let p = &mut points[slot * d..(slot + 1) * d];
        match snap {
            Snap::Center => key.center(d, cell, p),
            Snap::Centroid => {
                for (o, a) in p.iter_mut().zip(&acc[slot * d..(slot + 1) * d]) {
                    *o = a / mass[slot];
                }
            }
        }
    }

    let displacement = nu
        .atoms()
        .zip(&owner)
        .map(|((x, w), &slot)| w * ground(distance(x, &points[slot * d..(slot + 1) * d]), alpha))
        .sum();

    Quantized {
        measure: DiscreteMeasure::from_parts_unchecked(d, points, mass),
        displacement,
        cell,
    }
}

/// Merges atoms of several measures on one shared grid, coarsening the grid
/// by factors of two until the total support of the results is at most `cap`.
pub fn quantize_jointly(
    measures: &[&DiscreteMeasure],
    start_cell: f64,
    cap: usize,
    snap: Snap,
    alpha: f64,
) -> Vec<Quantized> {
    let mut cell = start_cell;
    loop {
        let out: Vec<Quantized> = measures
            .iter()
            .map(|m| quantize(m, cell, snap, alpha))
            .collect();
        let total: usize = out.iter().map(|q| q.measure.len()).sum();
        if total <= cap {
            return out;
        }
        cell *= 2.0;
    }
}

pub(crate) fn ground(dist: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        dist
    } else {
        dist.powf(alpha)
    }
}

pub(crate) fn merge_exact<K: Hash + Eq>(
    d: usize,
    atoms: impl Iterator<Item = (K, Vec<f64>, f64)>,
) -> (Vec<f64>, Vec<f64>) {
    let mut index: FxHashMap<K, usize> = FxHashMap::default();
    let mut points = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (key, x, w) in atoms {
        match index.get(&key) {
            Some(&slot) => weights[slot] += w,
            None => {
                index.insert(key, weights.len());
                points.extend_from_slice(&x[..d]);
                weights.push(w);
            }
        }
    }
    (points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_a_center() {
        let nu = DiscreteMeasure::dirac(&[0.0, 0.0]);
        let q = quantize(&nu, 0.1, Snap::Center, 1.0);
        assert_eq!(q.measure.point(0), &[0.0, 0.0]);
        assert_eq!(q.displacement, 0.0);
    }

    #[test]
    fn centroid_preserves_mean_and_bounds_displacement() {
        let nu = DiscreteMeasure::new(
            2,
            vec![0.01, 0.02, 0.03, 0.01, 0.5, 0.5, 0.52, 0.49],
            vec![0.25, 0.25, 0.25, 0.25],
        )
        .unwrap();
        let q = quantize(&nu, 0.1, Snap::Centroid, 1.0);
        assert_eq!(q.measure.len(), 2);
        let (m0, m1) = (nu.mean(), q.measure.mean());
        assert!((m0[0] - m1[0]).abs() < 1e-15 && (m0[1] - m1[1]).abs() < 1e-15);
        assert!(q.displacement <= 0.1 * 2f64.sqrt() / 2.0 * 2.0);
        assert!(q.displacement > 0.0);
    }

    #[test]
    fn joint_quantization_respects_cap() {
        let pts: Vec<f64> = (0..200).flat_map(|i| [i as f64 * 0.01, 0.0]).collect();
        let a = DiscreteMeasure::uniform(2, pts.clone()).unwrap();
        let b = DiscreteMeasure::uniform(2, pts).unwrap();
        let out = quantize_jointly(&[&a, &b], 0.001, 50, Snap::Centroid, 1.0);
        assert!(out.iter().map(|q| q.measure.len()).sum::<usize>() <= 50);
        assert_eq!(out[0].cell, out[1].cell);
    }
}
