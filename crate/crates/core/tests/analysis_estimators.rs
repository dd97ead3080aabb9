//! Sampling estimators on maps and trajectories with known constants.

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use glued_core::analysis::{estimate_bilipschitz, estimate_dwell_function, BilipschitzOptions, RegionSampler};
use glued_core::hybrid::simulate_hybrid;
use glued_core::models::{bouncing_ball, BallParams};
use glued_core::sets::{Chart, ParamSet};
use glued_core::{Error, GluingMap, Matrix, SimParams, Vector, ZeroInput};
use proptest::prelude::*;

fn square() -> RegionSampler {
    RegionSampler::new(
        ParamSet::single(Chart::new(vec![-1.0, -1.0], vec![1.0, 1.0], |s| s.clone())),
        Arc::new(|_| true),
    )
}

#[test]
fn scaling_map_has_exact_constant() {
    let gm = GluingMap::new(2, |x| x * 2.0, |z| z * 0.5, |_| true).with_jacobian(|_| Matrix::identity(2, 2) * 2.0);
    let est = estimate_bilipschitz(&gm, &square(), BilipschitzOptions { n_pairs: 3_000, seed: 1, refine: true }).unwrap();
    assert_abs_diff_eq!(est.constant, 0.5, epsilon = 1e-12);
    assert_eq!(est.rejected, 0);
}

#[test]
fn anisotropic_map_constant_is_the_inverse_smallest_gain() {
    // psi = diag(4, 0.25): |x - y| / |psi x - psi y| peaks at 4 along the second axis.
    let gm = GluingMap::new(
        2,
        |x| Vector::from_vec(vec![4.0 * x[0], 0.25 * x[1]]),
        |z| Vector::from_vec(vec![z[0] / 4.0, 4.0 * z[1]]),
        |_| true,
    );
    let est = estimate_bilipschitz(&gm, &square(), BilipschitzOptions { n_pairs: 3_000, seed: 2, refine: true }).unwrap();
    assert!(est.constant <= 4.0 + 1e-9);
    assert!(est.constant > 3.99, "{}", est.constant);
}

#[test]
fn collapsing_map_rejects_every_pair() {
    let gm = GluingMap::new(2, |_| Vector::zeros(2), |z| z.clone(), |_| true);
    let err = estimate_bilipschitz(&gm, &square(), BilipschitzOptions { n_pairs: 300, seed: 0, refine: false });
    assert!(matches!(err, Err(Error::DegenerateSampler)));
}

fn ball_runs(starts: &[(f64, f64)], horizon: f64) -> Vec<glued_core::HybridExecution> {
    let sys = bouncing_ball::hybrid_system(1.0);
    starts
        .iter()
        .map(|&(h, v)| {
            simulate_hybrid(&sys, &Vector::from_vec(vec![h, v]), &ZeroInput(0), &SimParams::with_horizon(horizon)).unwrap()
        })
        .collect()
}

#[test]
fn dwell_rejects_bad_grids() {
    let ball = bouncing_ball(BallParams::default()).unwrap();
    let runs = ball_runs(&[(2.0, -3.0)], 5.0);
    for grid in [vec![], vec![0.0, 0.1], vec![0.2, 0.1]] {
        let r = estimate_dwell_function(&ball.sys, &ball.sampler.jump, &runs, &grid);
        assert!(matches!(r, Err(Error::InvalidParameter(_))), "{grid:?}");
    }
}

#[test]
fn dwell_needs_jumps() {
    let ball = bouncing_ball(BallParams::default()).unwrap();
    // Rising from 5 m, the ball cannot land within half a second.
    let runs = ball_runs(&[(5.0, 1.0)], 0.5);
    let r = estimate_dwell_function(&ball.sys, &ball.sampler.jump, &runs, &[0.1]);
    assert!(matches!(r, Err(Error::NoJumpsObserved)), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The fitted dwell function is non-decreasing and never below the raw measurements.
    #[test]
    fn dwell_alpha_is_monotone(h in 0.5f64..3.0, v in -2.0f64..2.0, mut grid in prop::collection::vec(0.005f64..0.5, 1..6)) {
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let ball = bouncing_ball(BallParams::default()).unwrap();
        let runs = ball_runs(&[(h, v)], 8.0);
        let est = estimate_dwell_function(&ball.sys, &ball.sampler.jump, &runs, &grid).unwrap();
        prop_assert!(est.alpha_values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(est.alpha_values.iter().zip(&est.raw_alpha).all(|(a, r)| a >= r));
        prop_assert_eq!(est.alpha(0.0), 0.0);
        for e in &grid {
            prop_assert!(est.alpha(*e) >= 0.0);
        }
    }
}
