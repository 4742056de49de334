//! Iterated piecewise-stationary random functions.
//!
//! A finite family of Lipschitz maps is applied at random, with the choice of
//! map drawn from a sampling measure that stays fixed for an epoch and then
//! changes. This crate simulates such systems, propagates distributions
//! through the dual Markov operator, measures transport distances between
//! them, and evaluates the contraction bounds that govern how closely the
//! distribution tracks each epoch's invariant measure.
//!
//! ```
//! use ipsrf::{maple_leaf, maple_leaf_measures, contraction_factor};
//!
//! let family = maple_leaf();
//! let [mu0, ..] = maple_leaf_measures();
//! let r = contraction_factor(&family, &mu0).unwrap();
//! assert!((r - 0.570125).abs() < 1e-6);
//! ```

// Input checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod maps;
pub mod measure;
pub mod rng;
pub mod schedule;
pub mod transport;

pub use bounds::{
    aposteriori_bound, aposteriori_from_residual, contraction_factor, derivative_bound,
    geometric_decay_check, regret_bound, regret_bound_per_epoch, subsequent_invariants_bound,
    test_function_bound, tracking_error_bound, BoundRecord, BoundsReport, DecayReport,
};
pub use error::{Error, Result};
pub use maps::{maple_leaf, AffineMap, FnMap, LipschitzMap, MapFamily};
pub use measure::{
    cesaro_average, estimate_invariant_measure, histogram_density, iterate_push_forward,
    push_forward, push_forward_exact, simulate_epoch, DiscreteMeasure, HistogramGrid,
    InvariantEstimate, ParticleCloud, PushForward, Truncation,
};
pub use schedule::{
    maple_leaf_measures, maple_leaf_schedule, tv_distance, validate_schedule, Epoch,
    SamplingMeasure, Schedule, ValidationReport,
};
pub use transport::{
    sinkhorn, wasserstein_1d, wasserstein_exact, wasserstein_interval, DistanceInterval,
    GroundCost, TransportPlan,
};
