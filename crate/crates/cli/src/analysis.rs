//! Bound evaluation on exact push-forward iterates.
//!
//! Within epoch `k` the iterates start at `nu_k^0`: the point mass at the
//! configured start for the first epoch, and the previous epoch's invariant
//! estimate afterwards (after 30000 steps the simulated measure sits far
//! below the estimator tolerance from it). Large measures are reduced before
//! each transport solve, and every reduction error widens the reported
//! distances into certified intervals.

use ipsrf::bounds::{geometric_decay_check_capped, DecayReport};
use ipsrf::measure::Truncation;
use ipsrf::transport::{reduce_support, reduced_interval, Reduced};
use ipsrf::{
    derivative_bound, iterate_push_forward, regret_bound_per_epoch, subsequent_invariants_bound,
    test_function_bound, tracking_error_bound, BoundsReport, DiscreteMeasure, GroundCost,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, Validated};
use crate::error::{CliError, CliResult};

/// An invariant-measure estimate and its certified distance to the true one.
#[derive(Clone, Debug)]
pub struct InvariantInput {
    pub measure: DiscreteMeasure,
    pub distance_bound: f64,
}

/// Certified interval for `d(nu_k^s, nu_k*)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterateRow {
    pub epoch: usize,
    pub step: usize,
    pub lower: f64,
    pub upper: f64,
    /// Truncation error of the iterate itself, included in the interval.
    pub truncation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubsequentRow {
    pub from_epoch: usize,
    pub to_epoch: usize,
    pub lower: f64,
    pub upper: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsOutcome {
    pub report: BoundsReport,
    pub iterates: Vec<IterateRow>,
    pub subsequent: Vec<SubsequentRow>,
    /// Lower end of `d(nu_k^1, nu_k^0)` per epoch, the input of the tracking bound.
    pub d10_lower: Vec<f64>,
    #[serde(skip)]
    pub decay: Vec<DecayReport>,
}

/// Push-forward truncation used for all iterates of a run.
pub fn truncation(config: &ExperimentConfig, validated: &Validated) -> Truncation {
    Truncation {
        merge_cell: validated
            .family
            .absorbing_radius()
            .filter(|r| *r > 0.0)
            .map(|r| config.simulation.merge_fraction * 2.0 * r),
        max_atoms: Some(config.simulation.max_atoms),
    }
}

pub fn evaluate_bounds(
    config: &ExperimentConfig,
    validated: &Validated,
    invariants: &[InvariantInput],
) -> CliResult<BoundsOutcome> {
    let family = &validated.family;
    let epochs = validated.schedule.epochs();
    if invariants.len() != epochs.len() {
        return Err(CliError::Config(format!(
            "{} invariant estimates for {} epochs",
            invariants.len(),
            epochs.len()
        )));
    }
    let spec = &config.bounds;
    let cost = GroundCost::default();
    let half = spec.atom_cap / 2;
    let b = test_function_bound(family).map_err(|e| CliError::core("test-function bound", e))?;
    let m = derivative_bound(cost).map_err(|e| CliError::core("derivative bound", e))?;
    let mut report = BoundsReport {
        r_per_epoch: validated.r.clone(),
        e_observed: validated.report.steps.iter().map(|s| s.distance).collect(),
        b,
        m,
        notes: vec![
            "iterates start from a point mass at the start in the first epoch and from the previous invariant estimate afterwards".into(),
            format!(
                "observed regret sums the first {} steps and bounds the rest by geometric contraction",
                spec.iterate_steps
            ),
        ],
        records: Vec::new(),
    };
    let trunc = truncation(config, validated);
    let reduce = |nu: &DiscreteMeasure, what: &dyn Fn() -> String| -> CliResult<Reduced> {
        reduce_support(nu, half, cost).map_err(|e| CliError::core(what(), e))
    };

    let reduced_star = invariants
        .iter()
        .enumerate()
        .map(|(k, inv)| reduce(&inv.measure, &|| format!("epoch {k}: reducing invariant")))
        .collect::<CliResult<Vec<_>>>()?;

    let mut iterates = Vec::new();
    let mut d10_lower = Vec::new();
    let mut decay = Vec::new();
    let mut regret_terms = Vec::new();
    let mut regret_observed = 0.0;

    for (k, ep) in epochs.iter().enumerate() {
        let r = validated.r[k];
        let db = invariants[k].distance_bound;
        report.push(format!("a-posteriori distance, epoch {k}"), config.estimator.tol, db);

        let start = if k == 0 {
            DiscreteMeasure::dirac(&validated.start)
        } else {
            invariants[k - 1].measure.clone()
        };
        let steps = spec.iterate_steps.max(2);
        let trace = iterate_push_forward(&start, family, &ep.measure, steps, &trunc)
            .map_err(|e| CliError::core(format!("epoch {k}: push-forward iterates"), e))?;
        let err = &trace.error_bound;
        let reduced = trace
            .measures
            .iter()
            .enumerate()
            .map(|(s, nu)| reduce(nu, &|| format!("epoch {k} step {s}: reducing iterate")))
            .collect::<CliResult<Vec<_>>>()?;
        let interval = |a: &Reduced, c: &Reduced, what: &dyn Fn() -> String| {
            reduced_interval(a, c, cost).map_err(|e| CliError::core(what(), e))
        };

        let first = interval(&reduced[1], &reduced[0], &|| format!("epoch {k}: d(nu^1, nu^0)"))?;
        let d10 = (first.lower - err[0] - err[1]).max(0.0);
        d10_lower.push(d10);

        let mut uppers = Vec::with_capacity(steps);
        for s in 1..=steps {
            let iv = interval(&reduced[s], &reduced_star[k], &|| {
                format!("epoch {k} step {s}: distance to invariant")
            })?;
            let row = IterateRow {
                epoch: k,
                step: s,
                lower: (iv.lower - err[s] - db).max(0.0),
                upper: iv.upper + err[s] + db,
                truncation: err[s],
            };
            uppers.push(row.upper);
            iterates.push(row);
        }
        let tracking = tracking_error_bound(d10, r)
            .map_err(|e| CliError::core(format!("epoch {k}: tracking bound"), e))?;
        report.push(format!("tracking error, epoch {k}"), tracking, uppers[0]);

        // d(nu^s, nu*) <= r^(s - S) d(nu^S, nu*) for the steps not evaluated
        let tail = uppers[steps - 1] * r / (1.0 - r);
        regret_observed += uppers.iter().sum::<f64>() + tail;
        regret_terms.push((d10, r));

        let check = geometric_decay_check_capped(
            &trace.measures,
            r,
            spec.decay_tol,
            err,
            spec.atom_cap,
        )
        .map_err(|e| CliError::core(format!("epoch {k}: geometric decay"), e))?;
        let worst = check
            .consecutive
            .iter()
            .chain(&check.pairs)
            .map(|rec| if rec.bound > 0.0 { rec.observed / rec.bound } else { 0.0 })
            .fold(0.0, f64::max);
        report.push(format!("geometric decay ratio, epoch {k}"), 1.0, worst);
        decay.push(check);
    }

    let mut subsequent = Vec::new();
    for k in 0..epochs.len().saturating_sub(1) {
        let sb = subsequent_invariants_bound(
            family,
            &epochs[k].measure,
            &epochs[k + 1].measure,
            b,
            m,
            spec.map_drift,
        )
        .map_err(|e| CliError::core(format!("epochs {k} -> {}", k + 1), e))?;
        let iv = reduced_interval(&reduced_star[k], &reduced_star[k + 1], cost)
            .map_err(|e| CliError::core(format!("epochs {k} -> {}", k + 1), e))?;
        let slack = invariants[k].distance_bound + invariants[k + 1].distance_bound;
        let row = SubsequentRow {
            from_epoch: k,
            to_epoch: k + 1,
            lower: (iv.lower - slack).max(0.0),
            upper: iv.upper + slack,
            bound: sb.bound,
        };
        report.push(format!("subsequent invariants, epochs {k} -> {}", k + 1), sb.bound, row.upper);
        subsequent.push(row);
    }

    if !epochs.is_empty() {
        let bound = regret_bound_per_epoch(&regret_terms)
            .map_err(|e| CliError::core("regret bound", e))?;
        report.push("regret, all epochs", bound, regret_observed);
    }

    Ok(BoundsOutcome {
        report,
        iterates,
        subsequent,
        d10_lower,
        decay,
    })
}
