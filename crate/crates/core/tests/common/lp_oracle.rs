//! Brute-force transport LP by vertex enumeration, for a handful of atoms.
//!
//! Every vertex of the transportation polytope is a basic solution with at
//! most `n + m - 1` positive entries. Each such support set is tried, the
//! marginal equations (one redundant row dropped) are solved on it, and the
//! cheapest non-negative solution wins.

use nalgebra::{DMatrix, DVector};

pub fn brute_force_transport(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let vars = n * m;
    let basis = n + m - 1;
    assert!(vars <= 16, "oracle is only meant for tiny instances");
    // marginal equations: rows 0..n for a, then m - 1 column sums (last dropped)
    let mut eq = DMatrix::<f64>::zeros(basis, vars);
    let mut rhs = DVector::<f64>::zeros(basis);
    for i in 0..n {
        for j in 0..m {
            eq[(i, i * m + j)] = 1.0;
        }
        rhs[i] = a[i];
    }
    for j in 0..m - 1 {
        for i in 0..n {
            eq[(n + j, i * m + j)] = 1.0;
        }
        rhs[n + j] = b[j];
    }

    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << vars) {
        if mask.count_ones() as usize != basis {
            continue;
        }
        let cols: Vec<usize> = (0..vars).filter(|v| mask & (1 << v) != 0).collect();
        let sub = DMatrix::from_fn(basis, basis, |r, c| eq[(r, cols[c])]);
        let Some(x) = sub.lu().solve(&rhs) else { continue };
        if x.iter().any(|v| !v.is_finite() || *v < -1e-12) {
            continue;
        }
        // the dropped column equation must hold as well
        let mut full = vec![0.0; vars];
        for (k, &c) in cols.iter().enumerate() {
            full[c] = x[k];
        }
        let last: f64 = (0..n).map(|i| full[i * m + m - 1]).sum();
        if (last - b[m - 1]).abs() > 1e-9 {
            continue;
        }
        let value: f64 = full.iter().zip(cost).map(|(f, c)| f * c).sum();
        best = best.min(value);
    }
    best
}
