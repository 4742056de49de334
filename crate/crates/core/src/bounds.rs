//! Closed-form contraction constants and the stability, tracking and regret
//! bounds built from them, plus a report that sets each bound beside the
//! value actually observed.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::MapFamily;
use crate::measure::{push_forward_exact, DiscreteMeasure};
use crate::schedule::{tv_distance, SamplingMeasure};
use crate::transport::{
    reduce_support, reduced_interval, wasserstein_interval, GroundCost, DEFAULT_EXACT_CAP,
};

/// Slack allowed when comparing an observed value with its bound.
pub const SATISFIED_TOL: f64 = 1e-9;

/// `r = sum_j mu_j L_j`, the expected Lipschitz modulus of one random step.
pub fn contraction_factor(family: &MapFamily, mu: &SamplingMeasure) -> Result<f64> {
    if family.len() != mu.len() {
        return Err(Error::invalid(format!(
            "family has {} maps but the sampling measure has {} weights",
            family.len(),
            mu.len()
        )));
    }
    Ok(mu
        .weights()
        .iter()
        .zip(family.lipschitz_constants())
        .map(|(w, l)| w * l)
        .sum())
}

fn contractive(r: f64) -> Result<f64> {
    if r < 1.0 {
        Ok(r)
    } else {
        Err(Error::NotContractive { r })
    }
}

fn open_unit(r: f64) -> Result<f64> {
    if r > 0.0 && r < 1.0 {
        Ok(r)
    } else {
        Err(Error::invalid(format!("contraction factor must lie in (0, 1), got {r}")))
    }
}

/// Sup of a test function over the absorbing ball: its diameter `2R`.
pub fn test_function_bound(family: &MapFamily) -> Result<f64> {
    family
        .absorbing_radius()
        .map(|r| 2.0 * r)
        .ok_or(Error::NotContractive {
            r: family.max_lipschitz(),
        })
}

/// Derivative bound of the test class; 1-Lipschitz functions for `alpha = 1`.
pub fn derivative_bound(cost: GroundCost) -> Result<f64> {
    if cost.alpha() == 1.0 {
        Ok(1.0)
    } else {
        Err(Error::invalid("a derivative bound is only defined for alpha = 1"))
    }
}

/// `d(nu, nu*) <= d(nu, P* nu) / (1 - r)`, with the distance to the exact
/// push-forward taken from the upper end of a certified interval.
pub fn aposteriori_bound(
    nu: &DiscreteMeasure,
    family: &MapFamily,
    mu: &SamplingMeasure,
) -> Result<f64> {
    let r = contractive(contraction_factor(family, mu)?)?;
    let image = push_forward_exact(nu, family, mu)?;
    let d = wasserstein_interval(nu, &image, GroundCost::default(), DEFAULT_EXACT_CAP)?;
    Ok(d.upper / (1.0 - r))
}

/// Same bound from an already certified residual `d(nu, P* nu) <= residual`.
pub fn aposteriori_from_residual(residual: f64, r: f64) -> Result<f64> {
    let r = contractive(r)?;
    if !(residual >= 0.0) {
        return Err(Error::invalid("residual must be non-negative"));
    }
    Ok(residual / (1.0 - r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubsequentBound {
    pub bound: f64,
    /// The factor used: the larger of the two epochs' factors.
    pub r: f64,
    pub e: f64,
}

/// `W1(nu_k*, nu_{k+1}*) <= (M drift + B e) / (1 - r)` with
/// `r = max(r_k, r_{k+1})` and `e` the total-variation step.
pub fn subsequent_invariants_bound(
    family: &MapFamily,
    mu_k: &SamplingMeasure,
    mu_next: &SamplingMeasure,
    b: f64,
    m: f64,
    map_drift: f64,
) -> Result<SubsequentBound> {
    if !(map_drift >= 0.0) {
        return Err(Error::invalid("map drift must be non-negative"));
    }
    let r = contraction_factor(family, mu_k)?.max(contraction_factor(family, mu_next)?);
    let r = contractive(r)?;
    let e = tv_distance(mu_k, mu_next)?;
    Ok(SubsequentBound {
        bound: (m * map_drift + b * e) / (1.0 - r),
        r,
        e,
    })
}

/// `d(nu^1, nu*) <= r / (1 - r)^2 * d(nu^1, nu^0)`.
pub fn tracking_error_bound(d10: f64, r: f64) -> Result<f64> {
    let r = open_unit(r)?;
    if !(d10 >= 0.0) {
        return Err(Error::invalid("distance must be non-negative"));
    }
    Ok(r / ((1.0 - r) * (1.0 - r)) * d10)
}

/// `sum_k 2 r / (1 - r)^2 * d10_k` with a common factor.
pub fn regret_bound(d10_per_epoch: &[f64], r: f64) -> Result<f64> {
    let terms: Vec<(f64, f64)> = d10_per_epoch.iter().map(|&d| (d, r)).collect();
    if terms.is_empty() {
        open_unit(r)?;
    }
    regret_bound_per_epoch(&terms)
}

/// Regret bound with a factor per epoch, `(d10_k, r_k)`.
pub fn regret_bound_per_epoch(terms: &[(f64, f64)]) -> Result<f64> {
    terms
        .iter()
        .map(|&(d, r)| tracking_error_bound(d, r).map(|t| 2.0 * t))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRecord {
    pub i: usize,
    pub j: usize,
    /// Lower end of the certified distance between iterates `i` and `j`.
    pub observed: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub r: f64,
    /// Upper estimate of `d(nu^1, nu^0)`.
    pub d10: f64,
    /// `d(nu^{i+1}, nu^i) <= r^i d10`.
    pub consecutive: Vec<DecayRecord>,
    /// `d(nu^j, nu^i) <= r^i d10 / (1 - r)`.
    pub pairs: Vec<DecayRecord>,
    pub passed: bool,
}

/// Checks the geometric decay of an iterate sequence.
///
/// `allowance[i]` bounds how far iterate `i` may sit from the exact iterate
/// (pruning error); pass zeros for exact sequences. Distances are certified
/// intervals: the lower end is compared with a bound built from upper ends.
/// Consecutive pairs are all checked; the telescoped bound is checked on
/// pairs `(i, i + 2)` and `(i, last)` for every fifth `i`.
pub fn geometric_decay_check(
    iterates: &[DiscreteMeasure],
    r: f64,
    tol: f64,
    allowance: &[f64],
) -> Result<DecayReport> {
    geometric_decay_check_capped(iterates, r, tol, allowance, DEFAULT_EXACT_CAP)
}

/// [`geometric_decay_check`] with each iterate reduced to at most `cap / 2`
/// atoms before any distance is taken.
pub fn geometric_decay_check_capped(
    iterates: &[DiscreteMeasure],
    r: f64,
    tol: f64,
    allowance: &[f64],
    cap: usize,
) -> Result<DecayReport> {
    if iterates.len() < 3 {
        return Err(Error::invalid("need at least three iterates"));
    }
    if allowance.len() != iterates.len() {
        return Err(Error::invalid("one allowance per iterate required"));
    }
    let r = contractive(r)?;
    let cost = GroundCost::default();
    let reduced = iterates
        .iter()
        .map(|m| reduce_support(m, (cap / 2).max(1), cost))
        .collect::<Result<Vec<_>>>()?;
    let dist = |i: usize, j: usize| reduced_interval(&reduced[i], &reduced[j], cost);
    let first = dist(1, 0)?;
    let d10 = first.upper + allowance[0] + allowance[1];
    let n = iterates.len();

    let mut consecutive = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let iv = if i == 0 { first } else { dist(i + 1, i)? };
        let bound = r.powi(i as i32) * d10 * (1.0 + tol) + allowance[i] + allowance[i + 1];
        consecutive.push(DecayRecord {
            i,
            j: i + 1,
            observed: iv.lower,
            bound,
            satisfied: iv.lower <= bound,
        });
    }

    let mut pairs = Vec::new();
    for i in 0..n - 2 {
        let mut js = vec![i + 2];
        if i % 5 == 0 {
            js.push(n - 1);
        }
        js.dedup();
        for j in js {
            let iv = dist(j, i)?;
            let bound =
                r.powi(i as i32) / (1.0 - r) * d10 * (1.0 + tol) + allowance[i] + allowance[j];
            pairs.push(DecayRecord {
                i,
                j,
                observed: iv.lower,
                bound,
                satisfied: iv.lower <= bound,
            });
        }
    }
    let passed = consecutive.iter().chain(&pairs).all(|rec| rec.satisfied);
    Ok(DecayReport {
        r,
        d10,
        consecutive,
        pairs,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRecord {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BoundsReport {
    pub r_per_epoch: Vec<f64>,
    pub e_observed: Vec<f64>,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "M")]
    pub m: f64,
    /// Human-readable notes on choices made while computing the bounds.
    pub notes: Vec<String>,
    pub records: Vec<BoundRecord>,
}

impl BoundsReport {
    pub fn push(&mut self, name: impl Into<String>, bound: f64, observed: f64) {
        self.records.push(BoundRecord {
            name: name.into(),
            bound,
            observed,
            satisfied: observed <= bound + SATISFIED_TOL,
        });
    }

    pub fn all_satisfied(&self) -> bool {
        self.records.iter().all(|r| r.satisfied)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "r per epoch : {}", fmt(&self.r_per_epoch));
        let _ = writeln!(s, "TV steps    : {}", fmt(&self.e_observed));
        let _ = writeln!(s, "B = {:.6}   M = {:.6}", self.b, self.m);
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        let width = self.records.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        let _ = writeln!(s, "{:<width$}  {:>14}  {:>14}  ok", "bound", "value", "observed");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:<width$}  {:>14.6e}  {:>14.6e}  {}",
                r.name,
                r.bound,
                r.observed,
                if r.satisfied { "yes" } else { "NO" }
            );
        }
        s
    }
}
