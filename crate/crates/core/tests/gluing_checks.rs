//! Gluing axioms and the glued system, against hand-derived expectations.


use approx::assert_abs_diff_eq;
use glued_core::gluing::{check_gluing_axioms, check_vector_field_matching, simulate_glued};
use glued_core::models::{bouncing_ball, reflected_di, ripple, BallParams};
use glued_core::sampling::SampleCounts;
use glued_core::{GluingMap, Matrix, Vector, ZeroInput};
use proptest::prelude::*;

const COUNTS: SampleCounts = SampleCounts {
    flow: 200,
    jump: 200,
    pairs: 1_000,
};

#[test]
fn shipped_gluings_pass_the_axioms() {
    for b in [
        bouncing_ball(BallParams::default()).unwrap(),
        ripple::ripple_model().unwrap(),
        reflected_di::reflected_double_integrator(Default::default()).unwrap(),
    ] {
        let s = b.sampler.draw(&b.sys, COUNTS, 5).unwrap();
        let r = check_gluing_axioms(&b.sys, &b.gm, &b.sampler, &s).unwrap();
        assert!(r.pass(), "{}: {:?}", b.id, r);
    }
}

#[test]
fn identity_map_does_not_glue() {
    let ball = bouncing_ball(BallParams::default()).unwrap();
    let id = GluingMap::new(2, |x| x.clone(), |z| z.clone(), |_| true).with_jacobian(|_| Matrix::identity(2, 2));
    let s = ball.sampler.draw(&ball.sys, COUNTS, 5).unwrap();
    let r = check_gluing_axioms(&ball.sys, &id, &ball.sampler, &s).unwrap();
    assert!(!r.g1.pass);
    // |x - g(x)| = 2 |x2| on the jump set {x1 = 0}.
    let worst = r.g1.worst_point.clone().unwrap();
    assert_abs_diff_eq!(r.g1.worst_residual, 2.0 * worst[1].abs(), epsilon = 1e-12);
    assert!(r.g2.pass && r.g4.pass);
}

#[test]
fn folding_map_is_not_injective() {
    let ball = bouncing_ball(BallParams::default()).unwrap();
    // Squaring the velocity glues impacts but also merges x and its mirror image.
    let fold = GluingMap::new(
        2,
        |x| Vector::from_vec(vec![x[0], x[1] * x[1]]),
        |z| Vector::from_vec(vec![z[0], z[1].max(0.0).sqrt()]),
        |_| true,
    )
    .with_jacobian(|x| Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0 * x[1]]));
    let mut s = ball.sampler.draw(&ball.sys, COUNTS, 5).unwrap();
    s.pairs.push((Vector::from_vec(vec![1.0, 2.0]), Vector::from_vec(vec![1.0, -2.0])));
    let r = check_gluing_axioms(&ball.sys, &fold, &ball.sampler, &s).unwrap();
    assert!(r.g1.pass);
    assert!(!r.g2.pass);
}

#[test]
fn identity_map_breaks_vector_field_matching() {
    let ball = bouncing_ball(BallParams::default()).unwrap();
    let id = GluingMap::new(2, |x| x.clone(), |z| z.clone(), |_| true).with_jacobian(|_| Matrix::identity(2, 2));
    let s = ball.sampler.draw(&ball.sys, COUNTS, 9).unwrap();
    let r = check_vector_field_matching(&ball.sys, &id, &s.jump, None).unwrap();
    // f(x) - f(g(x)) = (x2 - (-x2), 0).
    assert!(!r.pass);
    assert!(r.worst_residual > 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// On a jump-free arc the glued ball trajectory is psi of the parabola.
    #[test]
    fn glued_ball_follows_the_parabola(h in 1.0f64..6.0, v in 0.1f64..3.0) {
        let ball = bouncing_ball(BallParams::default()).unwrap();
        let x = |t: f64| Vector::from_vec(vec![h + v * t - 0.5 * t * t, v - t]);
        let horizon = v; // apex, far from the ground
        let z0 = ball.gm.apply(&x(0.0));
        let traj = simulate_glued(&ball.glued, &z0, &ZeroInput(0), horizon, 1e-3).unwrap();
        for (t, z) in traj.times.iter().zip(&traj.states) {
            prop_assert!((ball.gm.apply(&x(*t)) - z).norm() < 1e-8);
        }
    }

    /// The triple-angle map is a bijection of the cone minus the lower edge
    /// onto the punctured plane.
    #[test]
    fn ripple_inverse_round_trip(r in 0.1f64..5.0, th in -1.04f64..1.0471) {
        let x = Vector::from_vec(vec![r * th.cos(), r * th.sin()]);
        let back = ripple::psi_inv(&ripple::psi(&x));
        prop_assert!((back - &x).norm() < 1e-9);
    }
}
