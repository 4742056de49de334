//! Transport distances between discrete measures.
//!
//! [`wasserstein_exact`] solves the Kantorovich LP with a network simplex and
//! checks the answer against recovered dual potentials, so the value does not
//! rest on trusting the pivoting code. [`sinkhorn`] trades exactness for
//! scale; [`wasserstein_1d`] is an independent closed form on the line.

mod network_simplex;
mod one_dim;
mod sinkhorn;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::distance;
use crate::measure::{quantize, quantize_jointly, DiscreteMeasure, Snap, MASS_TOL};

pub use one_dim::wasserstein_1d;
pub use sinkhorn::{entropy, sinkhorn, sinkhorn_auto, sinkhorn_with, SinkhornEstimate, SinkhornOptions};

/// Default combined support size accepted by the exact solver.
pub const DEFAULT_EXACT_CAP: usize = 2_000;

/// Tolerance of the optimality certificate, relative to the largest cost.
pub const CERTIFICATE_TOL: f64 = 1e-7;

/// `cost(x, y) = |x - y|^alpha` with the Euclidean norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct GroundCost {
    alpha: f64,
}

impl Default for GroundCost {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

impl GroundCost {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = distance(x, y);
        if self.alpha == 1.0 {
            d
        } else {
            d.powf(self.alpha)
        }
    }

    /// Dense row-major cost matrix, rows from `a`, columns from `b`.
    pub fn matrix(&self, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Vec<f64> {
        let m = b.len();
        let mut c = vec![0.0; a.len() * m];
        c.par_chunks_mut(m.max(1)).enumerate().for_each(|(i, row)| {
            let x = a.point(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.eval(x, b.point(j));
            }
        });
        c
    }
}

/// Sparse coupling `(row, col, mass)` with its cost.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportPlan {
    pub coupling: Vec<(usize, usize, f64)>,
    pub objective: f64,
}

impl TransportPlan {
    pub fn row_sums(&self, rows: usize) -> Vec<f64> {
        let mut s = vec![0.0; rows];
        for &(i, _, w) in &self.coupling {
            s[i] += w;
        }
        s
    }

    pub fn col_sums(&self, cols: usize) -> Vec<f64> {
        let mut s = vec![0.0; cols];
        for &(_, j, w) in &self.coupling {
            s[j] += w;
        }
        s
    }
}

/// Worst violations of the LP optimality conditions, in cost units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// `max(0, -(c_ij - u_i - v_j))` over all pairs.
    pub dual_infeasibility: f64,
    /// `max |c_ij - u_i - v_j|` over pairs carrying mass.
    pub slackness: f64,
    /// `|primal - dual|`.
    pub duality_gap: f64,
    /// Largest marginal error of the plan.
    pub marginal_error: f64,
    /// Tolerance all of the above were checked against.
    pub tolerance: f64,
    pub pivots: usize,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.dual_infeasibility <= self.tolerance
            && self.slackness <= self.tolerance
            && self.duality_gap <= self.tolerance
            && self.marginal_error <= MASS_TOL
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactTransport {
    pub distance: f64,
    pub plan: TransportPlan,
    pub certificate: Certificate,
}

pub fn wasserstein_exact(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: GroundCost,
) -> Result<ExactTransport> {
    wasserstein_exact_capped(a, b, cost, DEFAULT_EXACT_CAP)
}

pub fn wasserstein_exact_capped(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: GroundCost,
    cap: usize,
) -> Result<ExactTransport> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let atoms = a.len() + b.len();
    if atoms > cap {
        return Err(Error::TooLarge { atoms, cap });
    }
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > MASS_TOL {
        return Err(Error::invalid(format!("mass mismatch: {ma} vs {mb}")));
    }

    // zero-weight atoms carry no information; drop them before solving
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.weight(i) > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.weight(j) > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| a.weight(i)).collect();
    let mut demand: Vec<f64> = cols.iter().map(|&j| b.weight(j)).collect();
    // absorb the sub-tolerance imbalance into the largest sink
    let gap = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    if let Some(big) = (0..demand.len()).max_by(|&x, &y| demand[x].total_cmp(&demand[y])) {
        demand[big] += gap;
    }

    let (n, m) = (rows.len(), cols.len());
    let mut c = vec![0.0; n * m];
    c.par_chunks_mut(m.max(1)).enumerate().for_each(|(r, row)| {
        let x = a.point(rows[r]);
        for (k, v) in row.iter_mut().enumerate() {
            *v = cost.eval(x, b.point(cols[k]));
        }
    });

    let sol = network_simplex::solve(&supply, &demand, &c);
    let max_cost = c.iter().copied().fold(0.0, f64::max);
    let tolerance = CERTIFICATE_TOL * max_cost.max(1.0);

    let mut coupling = Vec::with_capacity(n + m);
    let mut objective = 0.0;
    let mut slackness: f64 = 0.0;
    let mut dual_infeasibility: f64 = 0.0;
    let mut row_sum = vec![0.0; n];
    let mut col_sum = vec![0.0; m];
    for r in 0..n {
        for k in 0..m {
            let e = r * m + k;
            let reduced = c[e] - sol.u[r] - sol.v[k];
            dual_infeasibility = dual_infeasibility.max(-reduced);
            let f = sol.flow[e];
            if f > 0.0 {
                slackness = slackness.max(reduced.abs());
                objective += f * c[e];
                row_sum[r] += f;
                col_sum[k] += f;
                coupling.push((rows[r], cols[k], f));
            }
        }
    }
    let dual: f64 = supply.iter().zip(&sol.u).map(|(w, u)| w * u).sum::<f64>()
        + demand.iter().zip(&sol.v).map(|(w, v)| w * v).sum::<f64>();
    let marginal_error = row_sum
        .iter()
        .zip(&supply)
        .chain(col_sum.iter().zip(&demand))
        .map(|(s, w)| (s - w).abs())
        .fold(0.0, f64::max);
    let certificate = Certificate {
        dual_infeasibility,
        slackness,
        duality_gap: (objective - dual).abs(),
        marginal_error,
        tolerance,
        pivots: sol.pivots,
    };
    if !sol.converged || !certificate.passed() {
        return Err(Error::ConvergenceFailure {
            iterations: sol.pivots,
            residual: certificate
                .dual_infeasibility
                .max(certificate.slackness)
                .max(certificate.duality_gap),
        });
    }
    let objective = objective.max(0.0);
    Ok(ExactTransport {
        distance: objective,
        plan: TransportPlan {
            coupling,
            objective,
        },
        certificate,
    })
}

/// Two-sided enclosure of a transport distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Grid cell used to shrink the supports, `None` when solved directly.
    pub cell: Option<f64>,
}

impl DistanceInterval {
    pub fn exact(d: f64) -> Self {
        Self {
            estimate: d,
            lower: d,
            upper: d,
            cell: None,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Exact distance when the supports fit under `cap`; otherwise both measures
/// are merged on a common grid until they fit, and the merge displacements
/// widen the answer into an interval by the triangle inequality.
pub fn wasserstein_interval(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: GroundCost,
    cap: usize,
) -> Result<DistanceInterval> {
    if a.len() + b.len() <= cap {
        return Ok(DistanceInterval::exact(wasserstein_exact_capped(a, b, cost, cap)?.distance));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    if cap < 2 {
        return Err(Error::invalid("cap must allow at least one atom per measure"));
    }
    let (lo_a, hi_a) = a.bounding_box();
    let (lo_b, hi_b) = b.bounding_box();
    let d = a.dim();
    let span = (0..d)
        .map(|k| hi_a[k].max(hi_b[k]) - lo_a[k].min(lo_b[k]))
        .fold(0.0, f64::max);
    // start a little finer than a uniform fill would need; coarsening fixes the rest
    let per_axis = ((cap / 2) as f64).powf(1.0 / d as f64);
    let start = (span / per_axis / 4.0).max(f64::MIN_POSITIVE);
    let q = quantize_jointly(&[a, b], start, cap, Snap::Centroid, cost.alpha());
    let est = wasserstein_exact_capped(&q[0].measure, &q[1].measure, cost, cap)?.distance;
    let slack = q[0].displacement + q[1].displacement;
    Ok(DistanceInterval {
        estimate: est,
        lower: (est - slack).max(0.0),
        upper: est + slack,
        cell: Some(q[0].cell),
    })
}

/// A measure with a bounded number of atoms and its distance to the original.
#[derive(Clone, Debug)]
pub struct Reduced {
    pub measure: DiscreteMeasure,
    /// Upper bound on the transport cost between the input and `measure`.
    pub error: f64,
    pub cell: Option<f64>,
}

/// Merges atoms on a grid (centroid snap) until at most `max_atoms` remain;
/// measures already small enough are returned unchanged with zero error.
pub fn reduce_support(nu: &DiscreteMeasure, max_atoms: usize, cost: GroundCost) -> Result<Reduced> {
    if max_atoms == 0 {
        return Err(Error::invalid("max_atoms must be positive"));
    }
    if nu.len() <= max_atoms {
        return Ok(Reduced {
            measure: nu.clone(),
            error: 0.0,
            cell: None,
        });
    }
    let (lo, hi) = nu.bounding_box();
    let span = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let per_axis = (max_atoms as f64).powf(1.0 / nu.dim() as f64);
    let mut cell = (span / per_axis / 2.0).max(f64::MIN_POSITIVE);
    loop {
        let q = quantize(nu, cell, Snap::Centroid, cost.alpha());
        if q.measure.len() <= max_atoms {
            return Ok(Reduced {
                measure: q.measure,
                error: q.displacement,
                cell: Some(cell),
            });
        }
        // mild steps keep the result close to the requested size
        cell *= 1.25;
    }
}

/// Interval for the distance between the originals of two reduced measures.
pub fn reduced_interval(a: &Reduced, b: &Reduced, cost: GroundCost) -> Result<DistanceInterval> {
    let cap = a.measure.len() + b.measure.len();
    let est = wasserstein_exact_capped(&a.measure, &b.measure, cost, cap)?.distance;
    let slack = a.error + b.error;
    Ok(DistanceInterval {
        estimate: est,
        lower: (est - slack).max(0.0),
        upper: est + slack,
        cell: a.cell.or(b.cell),
    })
}

/// Total variation `sum |a_i - b_i|` for measures on the same finite support.
///
/// Transport is the right metric for these measures; this exists only for
/// the case where supports coincide exactly, and anything else is rejected.
pub fn tv_distance_measures(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.dim() != b.dim() || a.len() != b.len() {
        return Err(Error::invalid("total variation needs identical supports"));
    }
    let mut ia: Vec<usize> = (0..a.len()).collect();
    let mut ib: Vec<usize> = (0..b.len()).collect();
    let cmp = |m: &DiscreteMeasure, x: usize, y: usize| {
        m.point(x)
            .iter()
            .zip(m.point(y))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    ia.sort_by(|&x, &y| cmp(a, x, y));
    ib.sort_by(|&x, &y| cmp(b, x, y));
    let mut tv = 0.0;
    for (&i, &j) in ia.iter().zip(&ib) {
        if a.point(i) != b.point(j) {
            return Err(Error::invalid("total variation needs identical supports"));
        }
        tv += (a.weight(i) - b.weight(j)).abs();
    }
    Ok(tv)
}
