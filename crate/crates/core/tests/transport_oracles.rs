mod common {
    pub mod lp_oracle;
}

use common::lp_oracle::brute_force_transport;
use ipsrf::transport::{
    reduce_support, reduced_interval, sinkhorn_auto, sinkhorn_with, SinkhornOptions,
};
use ipsrf::{sinkhorn, wasserstein_1d, wasserstein_exact, DiscreteMeasure, GroundCost};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DiscreteMeasure {
    let pts = (0..n * d).map(|_| scale * rng.random::<f64>()).collect();
    let w = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    DiscreteMeasure::new(d, pts, w).unwrap()
}

fn w1(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    wasserstein_exact(a, b, GroundCost::default()).unwrap().distance
}

#[test]
fn exact_matches_cdf_oracle_on_the_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(1..=100);
        let m = rng.random_range(1..=100);
        let a = random_measure(&mut rng, n, 1, 10.0);
        let b = random_measure(&mut rng, m, 1, 10.0);
        let exact = w1(&a, &b);
        let oracle = wasserstein_1d(&a, &b, 1.0).unwrap();
        assert!((exact - oracle).abs() <= 1e-8, "{exact} vs {oracle}");
    }
}

#[test]
fn exact_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..300 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let a = random_measure(&mut rng, n, 2, 1.0);
        let b = random_measure(&mut rng, m, 2, 1.0);
        let alpha = if trial % 3 == 0 { 0.5 } else { 1.0 };
        let cost = GroundCost::new(alpha).unwrap();
        let c = cost.matrix(&a, &b);
        let oracle = brute_force_transport(a.weights(), b.weights(), &c);
        let exact = wasserstein_exact(&a, &b, cost).unwrap().distance;
        assert!((exact - oracle).abs() <= 1e-9, "{exact} vs {oracle}");
    }
}

#[test]
fn scaling_coordinates_scales_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let a = random_measure(&mut rng, 30, 2, 1.0);
        let b = random_measure(&mut rng, 25, 2, 1.0);
        let scale = |m: &DiscreteMeasure| {
            DiscreteMeasure::new(2, m.points().iter().map(|v| 2.0 * v).collect(), m.weights().to_vec())
                .unwrap()
        };
        let d = w1(&a, &b);
        let d2 = w1(&scale(&a), &scale(&b));
        assert!((d2 - 2.0 * d).abs() <= 1e-12 * d.max(1.0), "{d2} vs {}", 2.0 * d);
    }
}

#[test]
fn holder_cost_is_distance_to_the_alpha() {
    let a = DiscreteMeasure::dirac(&[0.0, 0.0]);
    let b = DiscreteMeasure::dirac(&[0.0, 9.0]);
    let d = wasserstein_exact(&a, &b, GroundCost::new(0.5).unwrap()).unwrap().distance;
    assert!((d - 3.0).abs() < 1e-12);
}

#[test]
fn reduced_interval_brackets_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = random_measure(&mut rng, 600, 2, 1.0);
    let b = random_measure(&mut rng, 700, 2, 1.0);
    let exact = w1(&a, &b);
    let ra = reduce_support(&a, 150, GroundCost::default()).unwrap();
    let rb = reduce_support(&b, 150, GroundCost::default()).unwrap();
    assert!(ra.measure.len() <= 150 && rb.measure.len() <= 150);
    let iv = reduced_interval(&ra, &rb, GroundCost::default()).unwrap();
    assert!(iv.lower <= exact && exact <= iv.upper, "{iv:?} vs {exact}");
}

#[test]
fn sinkhorn_dirac_pair_within_one_percent() {
    let a = DiscreteMeasure::dirac(&[0.0, 0.0]);
    let b = DiscreteMeasure::dirac(&[2.0, 1.0]);
    let dist = 5f64.sqrt();
    let est = sinkhorn(&a, &b, GroundCost::default(), 0.01 * dist, 1000).unwrap();
    assert!((est.distance - dist).abs() <= 0.01 * dist);
}

#[test]
fn sinkhorn_identical_within_bias_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = random_measure(&mut rng, 50, 2, 1.0);
    let est = sinkhorn(&a, &a, GroundCost::default(), 0.05, 5000).unwrap();
    assert!(est.distance <= est.error_bound);
}

#[test]
fn sinkhorn_dual_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = random_measure(&mut rng, 60, 2, 1.0);
    let b = random_measure(&mut rng, 70, 2, 1.0);
    let opts = SinkhornOptions {
        max_iter: 20_000,
        marginal_tol: 1e-9,
    };
    let est = sinkhorn_with(&a, &b, GroundCost::default(), 0.02, &opts).unwrap();
    assert!(est.dual_trace.len() > 2);
    for w in est.dual_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{} then {}", w[0], w[1]);
    }
    // the entropic bound holds on both sides
    let exact = w1(&a, &b);
    assert!((est.distance - exact).abs() <= est.error_bound);
}

#[test]
fn sinkhorn_auto_tracks_exact_on_200_atom_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..2 {
        let a = random_measure(&mut rng, 200, 2, 1.0);
        let b = random_measure(&mut rng, 200, 2, 1.0);
        let exact = w1(&a, &b);
        let est = sinkhorn_auto(&a, &b, GroundCost::default(), 0.01, &SinkhornOptions::default())
            .unwrap();
        let rel = (est.distance - exact).abs() / exact;
        assert!(rel <= 0.01, "relative error {rel}");
    }
}

fn small_measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec(((-2.0f64..2.0, -2.0f64..2.0), 0.01f64..1.0), 1..12).prop_map(|atoms| {
        let pts = atoms.iter().flat_map(|((x, y), _)| [*x, *y]).collect();
        let w = atoms.iter().map(|(_, w)| *w).collect();
        DiscreteMeasure::new(2, pts, w).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_distance_is_a_metric(a in small_measure(), b in small_measure(), c in small_measure()) {
        let ab = w1(&a, &b);
        let ba = w1(&b, &a);
        prop_assert!((ab - ba).abs() <= 1e-7);
        prop_assert!(ab <= w1(&a, &c) + w1(&c, &b) + 1e-7);
        prop_assert!(w1(&a, &a).abs() <= 1e-7);
    }

    #[test]
    fn plan_has_the_right_marginals(a in small_measure(), b in small_measure()) {
        let r = wasserstein_exact(&a, &b, GroundCost::default()).unwrap();
        prop_assert!(r.certificate.passed());
        for (s, w) in r.plan.row_sums(a.len()).iter().zip(a.weights()) {
            prop_assert!((s - w).abs() <= 1e-9);
        }
        for (s, w) in r.plan.col_sums(b.len()).iter().zip(b.weights()) {
            prop_assert!((s - w).abs() <= 1e-9);
        }
    }
}
