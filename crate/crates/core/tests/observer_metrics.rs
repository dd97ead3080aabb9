//! Windowed error metrics and observer gains against hand computations.

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use glued_core::linalg::poly_from_roots;
use glued_core::observer::{
    estimation_error_report, excluded_measure, graphical_closeness, in_jump_window, OutputInjectionObserver,
};
use glued_core::{Error, Vector};
use proptest::prelude::*;

fn observer(poles: &[f64]) -> OutputInjectionObserver {
    let m = poles.len();
    OutputInjectionObserver::with_poles(poles, Arc::new(|y| y), Arc::new(move |_| Vector::zeros(m)))
}

#[test]
fn placed_gain_gives_the_requested_characteristic_polynomial() {
    let poles = [-1.0, -2.0, -3.0];
    let obs = observer(&poles);
    let e = obs.error_matrix();
    // (s+1)(s+2)(s+3) = s^3 + 6 s^2 + 11 s + 6; char poly of a companion-like
    // matrix via trace, principal minors and determinant.
    let tr = e.trace();
    let minors: f64 = (0..3)
        .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
        .map(|(i, j)| e[(i, i)] * e[(j, j)] - e[(i, j)] * e[(j, i)])
        .sum();
    let det = e.determinant();
    assert_abs_diff_eq!(-tr, 6.0, epsilon = 1e-12);
    assert_abs_diff_eq!(minors, 11.0, epsilon = 1e-12);
    assert_abs_diff_eq!(-det, 6.0, epsilon = 1e-12);
    assert_abs_diff_eq!(obs.check_hurwitz().unwrap(), -1.0, epsilon = 1e-9);
}

#[test]
fn unstable_poles_are_rejected() {
    let obs = observer(&[0.5, -1.0]);
    assert!(matches!(obs.check_hurwitz(), Err(Error::NotHurwitz { .. })));
    // Within the margin but not below it.
    let obs = observer(&[-0.05, -1.0]);
    assert!(matches!(obs.check_hurwitz(), Err(Error::NotHurwitz { .. })));
}

#[test]
fn poly_from_roots_matches_expansion() {
    // (s+1)(s+2) = s^2 + 3 s + 2, leading coefficient omitted.
    assert_eq!(poly_from_roots(&[-1.0, -2.0]), vec![3.0, 2.0]);
}

#[test]
fn excluded_measure_merges_and_clips() {
    // [0,0.5) u (0.5,1.5) u (1,2) clipped to [0,10] = [0,2].
    assert_abs_diff_eq!(excluded_measure(&[0.0, 1.0, 1.5], 0.5, 10.0), 2.0, epsilon = 1e-15);
    // Disjoint windows add up, the last one is clipped at the horizon.
    assert_abs_diff_eq!(excluded_measure(&[2.0, 5.0, 9.9], 0.25, 10.0), 0.5 + 0.5 + 0.35, epsilon = 1e-12);
    assert_eq!(excluded_measure(&[], 1.0, 10.0), 0.0);
}

#[test]
fn jump_windows_are_open() {
    assert!(in_jump_window(1.2, &[1.0], 0.25));
    assert!(!in_jump_window(1.25, &[1.0], 0.25));
}

#[test]
fn error_report_on_a_hand_made_signal() {
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
    // Error decays like 1/(1+t) with a spike at the jump time 5.
    let errors: Vec<f64> = times
        .iter()
        .map(|&t| if (t - 5.0).abs() < 0.15 { 3.0 } else { 1.0 / (1.0 + t) })
        .collect();
    let r = estimation_error_report(&times, &errors, &[5.0], 0.2, 0.2);
    // 1/(1+t) < 0.2 iff t > 4; the last violating grid time is 4.0.
    assert!(r.pass);
    assert_abs_diff_eq!(r.settling_time.unwrap(), 4.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.max_err_on_windows, 1.0 / 5.1, epsilon = 1e-12);
    assert_abs_diff_eq!(r.excluded_measure, 0.6, epsilon = 1e-12);

    // Shrinking the window exposes the spike.
    let r = estimation_error_report(&times, &errors, &[5.0], 0.05, 0.2);
    assert_abs_diff_eq!(r.settling_time.unwrap(), 5.1, epsilon = 1e-9);
}

#[test]
fn error_report_fails_when_the_end_is_bad() {
    let times: Vec<f64> = (0..=10).map(f64::from).collect();
    let errors = vec![1.0; 11];
    let r = estimation_error_report(&times, &errors, &[], 0.5, 0.1);
    assert!(!r.pass);
    assert_eq!(r.settling_time, None);
}

#[test]
fn closeness_tolerates_a_time_shift() {
    let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e-3).collect();
    let step = |t: f64| Vector::from_vec(vec![if t < 0.5 { 0.0 } else { 1.0 }]);
    let x: Vec<Vector> = times.iter().map(|&t| step(t)).collect();
    let late: Vec<Vector> = times.iter().map(|&t| step(t - 0.02)).collect();
    let r = graphical_closeness(&times, &x, &late, 0.05, 0.1);
    assert!(r.pass);
    assert_eq!(r.t_star, Some(0.0));
    // A pointwise comparison would fail on [0.5, 0.52); the graphs are still close.
    let r = graphical_closeness(&times, &x, &late, 0.01, 0.1);
    assert!(r.t_star.unwrap() >= 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn excluded_measure_is_bounded(centers in prop::collection::vec(0.0f64..10.0, 0..8), alpha in 0.0f64..2.0) {
        let m = excluded_measure(&centers, alpha, 10.0);
        prop_assert!(m >= 0.0);
        prop_assert!(m <= (2.0 * alpha * centers.len() as f64).min(10.0) + 1e-12);
    }

    #[test]
    fn identical_signals_are_close(vals in prop::collection::vec(-5.0f64..5.0, 2..50)) {
        let times: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
        let x: Vec<Vector> = vals.iter().map(|&v| Vector::from_vec(vec![v])).collect();
        let r = graphical_closeness(&times, &x, &x, 1e-9, 0.5);
        prop_assert!(r.pass);
        prop_assert_eq!(r.worst_gap, 0.0);
    }
}
