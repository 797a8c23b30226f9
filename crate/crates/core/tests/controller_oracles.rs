//! Oracles for the reduced prediction model and the tracking QP.

use nalgebra::{DVector, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mgrid::dmpc::qp::unconstrained_minimizer;
use mgrid::dmpc::{neighbor_average, predict_outputs, solve_voltage_qp, PredictionModel, QpWeights};

/// Largest deviation between the reduced prediction and a fine-step
/// rollout with each input held for `r` steps.
fn rollout_deviation(h: usize, r: usize, ts: f64, y: [f64; 2], xi: &[f64]) -> f64 {
    let pm = PredictionModel::new(ts, h, r);
    let pred = predict_outputs(&pm.f, &pm.g, y, xi);
    let m = pm.model;
    let mut x = Vector2::new(y[0], y[1]);
    let mut worst = 0.0f64;
    for step in 0..h * r {
        x = m.a * x + m.b * xi[step / r];
        if (step + 1) % r == 0 {
            worst = worst.max((pred[(step + 1) / r - 1] - (m.c * x)[0]).abs());
        }
    }
    worst
}

#[test]
fn reduced_prediction_matches_fine_rollout_on_full_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for h in 1..=10 {
        for r in 1..=6 {
            for _ in 0..20 {
                let y = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
                let xi: Vec<f64> = (0..h).map(|_| rng.random_range(-100.0..100.0)).collect();
                let d = rollout_deviation(h, r, 0.01, y, &xi);
                assert!(d < 1e-12, "H={h} r={r}: {d}");
            }
        }
    }
}

proptest! {
    #[test]
    fn reduced_prediction_matches_rollout(
        h in 1usize..=10, r in 1usize..=6, ts in 1e-3f64..0.02,
        y0 in -10.0f64..10.0, y1 in -10.0f64..10.0,
        xi in proptest::collection::vec(-100.0f64..100.0, 10),
    ) {
        prop_assert!(rollout_deviation(h, r, ts, [y0, y1], &xi[..h]) < 1e-12);
    }

    #[test]
    fn unconstrained_solves_match_normal_equations(
        y0 in 300.0f64..320.0, y1 in -50.0f64..50.0,
        nb in proptest::collection::vec(305.0f64..315.0, 10),
        rho in prop_oneof![Just(1e-8), Just(1e-6), Just(1e-4)],
    ) {
        let pm = PredictionModel::new(0.01, 10, 5);
        let w = QpWeights::diagonal(10, rho, 0.0, 1e6);
        let refs: Vec<&[f64]> = vec![&nb];
        let out = solve_voltage_qp([y0, y1], &refs, &w, &pm, None);
        prop_assert!(!out.fallback);
        let target = neighbor_average(&pm, [y0, y1], &refs);
        let oracle = unconstrained_minimizer(&pm, [y0, y1], &target, &w);
        let got = DVector::from_vec(out.xi.clone());
        prop_assert!((&got - &oracle).amax() <= 1e-9 * oracle.amax().max(1.0), "{} vs {}", got, oracle);
    }

    #[test]
    fn small_input_weight_converges_without_fallback(
        y0 in 295.0f64..327.0, y1 in -200.0f64..200.0,
        nb in proptest::collection::vec(300.0f64..322.0, 10),
        warm in proptest::option::of(proptest::collection::vec(-1e4f64..1e4, 10)),
    ) {
        let pm = PredictionModel::new(0.01, 10, 5);
        let w = QpWeights::diagonal(10, 1e-8, 301.67, 320.33);
        let refs: Vec<&[f64]> = vec![&nb];
        let out = solve_voltage_qp([y0, y1], &refs, &w, &pm, warm.as_deref());
        prop_assert!(!out.fallback);
        prop_assert!(out.kkt_residual < 1e-8, "{}", out.kkt_residual);
        let pred = predict_outputs(&pm.f, &pm.g, [y0, y1], &out.xi);
        for v in pred {
            prop_assert!(v <= 320.33 + out.slack_hi + 1e-6 && v >= 301.67 - out.slack_lo - 1e-6);
        }
    }
}
