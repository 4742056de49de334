//! Time-varying sampling measures over map indices and their epoch schedule.

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Slack allowed when comparing a total-variation step against its budget.
pub const TV_COMPARE_TOL: f64 = 1e-12;

/// A probability vector on the map indices `1..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMeasure {
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl SamplingMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("sampling measure needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("sampling weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!(
                "sampling weights sum to {total}, expected 1"
            )));
        }
        let cdf = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(Self { weights, cdf })
    }

    /// Point mass on index `j` (1-based) out of `m`.
    pub fn point_mass(j: usize, m: usize) -> Result<Self> {
        if j == 0 || j > m {
            return Err(Error::invalid(format!("index {j} outside 1..={m}")));
        }
        let mut w = vec![0.0; m];
        w[j - 1] = 1.0;
        Self::new(w)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("uniform measure needs m >= 1"));
        }
        let w = 1.0 / m as f64;
        let mut weights = vec![w; m];
        // absorb rounding so the sum check passes for any m
        let rest: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - rest;
        Self::new(weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of index `j` (1-based).
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j - 1]
    }

    /// Draws an index in `1..=m` by inverse CDF.
    ///
    /// Consumes exactly one `u64` from `rng`; its top 53 bits give a uniform
    /// `u` in `[0, 1)` and the result is the first `j` with `u < F(j)`.
    #[inline]
    pub fn sample_index<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx < self.cdf.len() {
            return idx + 1;
        }
        // u landed above a cdf that rounded slightly below 1
        self.weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("weights sum to one")
            + 1
    }
}

/// Un-halved total variation `sum_j |a_j - b_j|`.
pub fn tv_distance(a: &SamplingMeasure, b: &SamplingMeasure) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "support sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub measure: SamplingMeasure,
    pub length: usize,
}

/// Ordered epochs with the slow-change budget `e` between consecutive ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    epochs: Vec<Epoch>,
    tv_bound: f64,
}

impl Schedule {
    /// Structural checks only; the change budget is checked by [`Schedule::validate`].
    pub fn new(epochs: Vec<Epoch>, tv_bound: f64) -> Result<Self> {
        if !(tv_bound.is_finite() && tv_bound >= 0.0) {
            return Err(Error::invalid("tv bound e must be finite and >= 0"));
        }
        if let Some(first) = epochs.first() {
            let m = first.measure.len();
            for (k, ep) in epochs.iter().enumerate() {
                if ep.measure.len() != m {
                    return Err(Error::invalid(format!(
                        "epoch {k} has {} weights, expected {m}",
                        ep.measure.len()
                    )));
                }
                if ep.length == 0 {
                    return Err(Error::invalid(format!("epoch {k} has zero length")));
                }
            }
        }
        Ok(Self { epochs, tv_bound })
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn tv_bound(&self) -> f64 {
        self.tv_bound
    }

    /// Support size, if there is at least one epoch.
    pub fn support_size(&self) -> Option<usize> {
        self.epochs.first().map(|e| e.measure.len())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs.iter().map(|e| e.length).sum()
    }

    /// Reports every consecutive total-variation step against the budget.
    pub fn validate(&self) -> ValidationReport {
        validate_schedule(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvStep {
    pub from_epoch: usize,
    pub to_epoch: usize,
    pub distance: f64,
    pub exceeds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub tv_bound: f64,
    pub steps: Vec<TvStep>,
    pub passed: bool,
}

/// Checks the slow-change condition; never fails, only reports.
pub fn validate_schedule(s: &Schedule) -> ValidationReport {
    let steps: Vec<TvStep> = s
        .epochs
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            // Schedule::new guarantees equal support sizes
            let distance = tv_distance(&pair[0].measure, &pair[1].measure).unwrap_or(f64::INFINITY);
            TvStep {
                from_epoch: k,
                to_epoch: k + 1,
                distance,
                exceeds: distance > s.tv_bound + TV_COMPARE_TOL,
            }
        })
        .collect();
    let passed = steps.iter().all(|st| !st.exceeds);
    ValidationReport {
        tv_bound: s.tv_bound,
        steps,
        passed,
    }
}

/// The three sampling measures of the maple-leaf experiment.
pub fn maple_leaf_measures() -> [SamplingMeasure; 3] {
    [
        SamplingMeasure::new(vec![0.23, 0.22, 0.22, 0.33]).expect("valid"),
        SamplingMeasure::new(vec![0.5, 0.2, 0.2, 0.1]).expect("valid"),
        SamplingMeasure::new(vec![0.3, 0.1, 0.4, 0.2]).expect("valid"),
    ]
}

/// Maple-leaf schedule: three epochs of `length` steps with budget `e`.
pub fn maple_leaf_schedule(length: usize, e: f64) -> Result<Schedule> {
    let epochs = maple_leaf_measures()
        .into_iter()
        .map(|measure| Epoch { measure, length })
        .collect();
    Schedule::new(epochs, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_weights() {
        assert!(SamplingMeasure::new(vec![]).is_err());
        assert!(SamplingMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(SamplingMeasure::new(vec![1.5, -0.5]).is_err());
        assert!(SamplingMeasure::new(vec![f64::NAN, 1.0]).is_err());
        assert!(SamplingMeasure::uniform(7).is_ok());
    }

    #[test]
    fn tv_examples() {
        let [m0, m1, m2] = maple_leaf_measures();
        assert_eq!(tv_distance(&m0, &m0).unwrap(), 0.0);
        assert_abs_diff_eq!(tv_distance(&m0, &m1).unwrap(), 0.54, epsilon = 1e-12);
        assert_abs_diff_eq!(tv_distance(&m1, &m2).unwrap(), 0.6, epsilon = 1e-12);
        let short = SamplingMeasure::uniform(3).unwrap();
        assert!(tv_distance(&m0, &short).is_err());
    }

    #[test]
    fn validate_examples() {
        let ok = maple_leaf_schedule(30_000, 0.6).unwrap().validate();
        assert!(ok.passed);
        assert_eq!(ok.steps.len(), 2);
        assert_abs_diff_eq!(ok.steps[0].distance, 0.54, epsilon = 1e-12);
        assert_abs_diff_eq!(ok.steps[1].distance, 0.60, epsilon = 1e-12);

        let tight = maple_leaf_schedule(30_000, 0.5).unwrap().validate();
        assert!(!tight.passed);
        assert!(tight.steps.iter().all(|s| s.exceeds));

        let single = Schedule::new(
            vec![Epoch {
                measure: SamplingMeasure::uniform(4).unwrap(),
                length: 10,
            }],
            0.0,
        )
        .unwrap();
        assert!(single.validate().passed);
        assert!(single.validate().steps.is_empty());
    }

    #[test]
    fn schedule_structure_checked() {
        let a = Epoch {
            measure: SamplingMeasure::uniform(4).unwrap(),
            length: 3,
        };
        let b = Epoch {
            measure: SamplingMeasure::uniform(3).unwrap(),
            length: 3,
        };
        assert!(Schedule::new(vec![a.clone(), b], 1.0).is_err());
        let zero = Epoch { length: 0, ..a.clone() };
        assert!(Schedule::new(vec![zero], 1.0).is_err());
        assert!(Schedule::new(vec![a], -1.0).is_err());
        assert!(Schedule::new(vec![], 0.1).unwrap().validate().passed);
    }

    #[test]
    fn point_mass_always_hits() {
        let d3 = SamplingMeasure::point_mass(3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| d3.sample_index(&mut rng) == 3));
    }

    #[test]
    fn uniform_frequencies() {
        let u = SamplingMeasure::uniform(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20240601);
        let mut counts = [0usize; 4];
        let n = 1_000_000;
        for _ in 0..n {
            counts[u.sample_index(&mut rng) - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.002, "{counts:?}");
        }
    }

    #[test]
    fn table_measure_frequency() {
        let [_, m1, _] = maple_leaf_measures();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| m1.sample_index(&mut rng) == 1).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn one_draw_per_sample() {
        let u = SamplingMeasure::uniform(4).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..17 {
            u.sample_index(&mut a);
            b.next_u64();
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn zero_weight_never_drawn() {
        let m = SamplingMeasure::new(vec![0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let j = m.sample_index(&mut rng);
            assert!(j == 2 || j == 4);
        }
    }

    fn measure_strategy() -> impl Strategy<Value = SamplingMeasure> {
        prop::collection::vec(0.0f64..1.0, 5).prop_filter_map("non-degenerate", |raw| {
            let total: f64 = raw.iter().sum();
            if total <= 1e-6 {
                return None;
            }
            let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let rest: f64 = w[1..].iter().sum();
            w[0] = (1.0 - rest).max(0.0);
            SamplingMeasure::new(w).ok()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in measure_strategy(), b in measure_strategy(), c in measure_strategy()) {
            let ab = tv_distance(&a, &b).unwrap();
            let ba = tv_distance(&b, &a).unwrap();
            let ac = tv_distance(&a, &c).unwrap();
            let cb = tv_distance(&c, &b).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
