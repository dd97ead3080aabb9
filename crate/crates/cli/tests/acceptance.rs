//! Acceptance suite. Every test prints one `criterion N ... PASS|FAIL` line
//! with the measured quantities next to the tolerance, then asserts.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use glued_cli::pipeline::{observer_run, resolve, tracking_run};
use glued_cli::{build_bundle, run_config, Mode, ScenarioConfig};
use glued_core::analysis::{
    bilipschitz_pairs, dwell_violations, estimate_bilipschitz, estimate_bilipschitz_on,
    estimate_dwell_function, estimate_glued_lipschitz, seam_pair_generator, BilipschitzOptions,
    GluedLipschitzOptions, RegionSampler,
};
use glued_core::gluing::{check_gluing_axioms, check_output_matching, check_vector_field_matching, simulate_glued};
use glued_core::hybrid::simulate_hybrid;
use glued_core::models::{bouncing_ball, ripple, BallParams, ExampleBundle, ObserverSetup, Registry};
use glued_core::observer::{estimation_error_report, graphical_closeness, run_output_injection_observer, ExecutionOutput};
use glued_core::sampling::SampleCounts;
use glued_core::tracking::{check_relaxed_matching, glued_error_continuity, simulate_glued_closed_loop};
use glued_core::{HybridExecution, Matrix, SimParams, Vector, ZeroInput};

const MODELS: [&str; 3] = ["bouncing_ball", "ripple", "reflected_di"];

fn verdict(n: u32, what: &str, pass: bool, detail: String) -> bool {
    println!("criterion {n:>2} {what}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn bundle(id: &str) -> ExampleBundle {
    Registry::builtin().build(id, &BTreeMap::new()).expect("shipped bundle builds")
}

fn vec2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

/// Ball state with energy `e` and normalized velocity `s` (unit gravity and mass).
fn ball_state(e: f64, s: f64) -> Vector {
    vec2(e * (1.0 - s * s), s * (2.0 * e).sqrt())
}

fn ball_exec(ball: &ExampleBundle, x0: &Vector, horizon: f64) -> HybridExecution {
    simulate_hybrid(&ball.sys, x0, &ZeroInput(0), &SimParams::with_horizon(horizon)).unwrap()
}

#[test]
fn criterion_01_gluing_axioms() {
    let counts = SampleCounts {
        flow: 1_000,
        jump: 1_000,
        pairs: 10_000,
    };
    let mut all = true;
    for id in MODELS {
        let b = bundle(id);
        let start = Instant::now();
        let samples = b.sampler.draw(&b.sys, counts, 0xacce).unwrap();
        let r = check_gluing_axioms(&b.sys, &b.gm, &b.sampler, &samples).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let pass = r.g1.worst_residual <= 1e-9
            && r.g2.pass
            && r.g2.samples >= 9_000
            && r.g3.worst_residual <= 1e-4
            && r.g4.worst_residual > 1e-8
            && secs < 5.0;
        all &= verdict(
            1,
            &format!("gluing axioms, {id}"),
            pass,
            format!(
                "G1 {:.2e} <= 1e-9, G2 {} on {} pairs, G3 {:.2e} <= 1e-4, G4 margin {:.2e} > 1e-8, {secs:.2} s < 5 s",
                r.g1.worst_residual,
                if r.g2.pass { "ok" } else { "violated" },
                r.g2.samples,
                r.g3.worst_residual,
                r.g4.worst_residual
            ),
        );
    }
    assert!(all);
}

#[test]
fn criterion_02_matching_conditions() {
    let counts = SampleCounts {
        flow: 10,
        jump: 1_000,
        pairs: 10,
    };
    let mut all = true;
    for id in ["bouncing_ball", "ripple"] {
        let b = bundle(id);
        let s = b.sampler.draw(&b.sys, counts, 0x3a7c).unwrap();
        let field = check_vector_field_matching(&b.sys, &b.gm, &s.jump, None).unwrap();
        let output = check_output_matching(&b.sys, &s.jump).unwrap();
        all &= verdict(
            2,
            &format!("matching, {id}"),
            field.worst_residual <= 1e-8 && output.worst_residual <= 1e-9,
            format!(
                "vector field {:.2e} <= 1e-8, output {:.2e} <= 1e-9 on {} jump samples",
                field.worst_residual, output.worst_residual, field.samples
            ),
        );
    }
    let b = bundle("reflected_di");
    let tr = b.tracking.as_ref().unwrap();
    let s = b.sampler.draw(&b.sys, counts, 0x3a7c).unwrap();
    let relaxed = check_relaxed_matching(&b.sys, &b.gm, &tr.feedback, &s.jump).unwrap();
    let worst = relaxed
        .input_condition
        .worst_residual
        .max(relaxed.drift_condition.worst_residual);
    all &= verdict(
        2,
        "relaxed matching, reflected_di",
        worst <= 1e-8,
        format!("input/drift residual {worst:.2e} <= 1e-8"),
    );
    assert!(all);
}

#[test]
fn criterion_03_pushforward_oracle() {
    let mut all = true;

    // Ball: three impacts by t = 16.
    let ball = bundle("bouncing_ball");
    let exec = ball_exec(&ball, &ball.defaults.x0, 16.0);
    let z0 = ball.gm.apply(&ball.defaults.x0);
    let glued = simulate_glued(&ball.glued, &z0, &ZeroInput(0), 16.0, 1e-3).unwrap();
    let sup = glued
        .times
        .iter()
        .zip(&glued.states)
        .map(|(&t, z)| (ball.gm.apply(&exec.state_dense_clamped(t)) - z).norm())
        .fold(0.0, f64::max);
    let jumps = exec.jumps.len();
    all &= verdict(
        3,
        "pushforward, bouncing_ball",
        jumps >= 3 && sup <= 1e-5,
        format!("sup {sup:.2e} <= 1e-5 over {jumps} jumps"),
    );

    // Ripple: against the glued simulation and the rotation exp(At) z0.
    let rip = bundle("ripple");
    let exec = simulate_hybrid(&rip.sys, &rip.defaults.x0, &ZeroInput(0), &SimParams::with_horizon(10.0)).unwrap();
    let z0 = rip.gm.apply(&rip.defaults.x0);
    let glued = simulate_glued(&rip.glued, &z0, &ZeroInput(0), 10.0, 1e-3).unwrap();
    let a = ripple::glued_generator();
    let (mut sup_sim, mut sup_exp) = (0.0f64, 0.0f64);
    for (&t, z) in glued.times.iter().zip(&glued.states) {
        let pushed = rip.gm.apply(&exec.state_dense_clamped(t));
        sup_sim = sup_sim.max((&pushed - z).norm());
        sup_exp = sup_exp.max((&pushed - (&a * t).exp() * &z0).norm());
    }
    let jumps = exec.jumps.len();
    all &= verdict(
        3,
        "pushforward, ripple",
        jumps >= 3 && sup_sim <= 1e-5 && sup_exp <= 1e-5,
        format!("sup vs glued run {sup_sim:.2e}, vs exp(At) {sup_exp:.2e}, <= 1e-5 over {jumps} jumps"),
    );

    // Reflected double integrator in closed loop.
    let rdi = bundle("reflected_di");
    let tr = rdi.tracking.as_ref().unwrap();
    let resolved = resolve(&ScenarioConfig::new("reflected_di", Mode::Track), &rdi).unwrap();
    let run = tracking_run(&rdi, &resolved).unwrap();
    let z0 = rdi.gm.apply(&rdi.defaults.x0);
    let horizon = resolved.params.t_end;
    let glued = simulate_glued_closed_loop(&tr.control, &tr.controller, &tr.reference, &z0, horizon, 1e-3).unwrap();
    let sup = glued
        .times
        .iter()
        .zip(&glued.states)
        .map(|(&t, z)| (rdi.gm.apply(&run.exec.state_dense_clamped(t)) - z).norm())
        .fold(0.0, f64::max);
    let jumps = run.exec.jumps.len();
    all &= verdict(
        3,
        "pushforward, reflected_di",
        jumps >= 3 && sup <= 1e-5,
        format!("sup {sup:.2e} <= 1e-5 over {jumps} jumps"),
    );
    assert!(all);
}

#[test]
fn criterion_04_linear_glued_error() {
    let ball = bundle("bouncing_ball");
    let Some(ObserverSetup::OutputInjection { observer, zeta_hat0 }) = &ball.observer else {
        panic!("the ball carries an output-injection observer");
    };
    let exec = ball_exec(&ball, &ball.defaults.x0, 5.0);
    let y = ExecutionOutput::new(&exec, ball.sys.output_map.clone().unwrap(), 1);
    let raw = run_output_injection_observer(observer, &y, zeta_hat0, 5.0, 1e-3).unwrap();
    // A + LC for the observer canonical form with the gain placing {-2, -3, -4}.
    let a_lc = Matrix::from_row_slice(3, 3, &[-9.0, 1.0, 0.0, -26.0, 0.0, 1.0, -24.0, 0.0, 0.0]);
    let e0 = zeta_hat0 - ball.gm.apply(&ball.defaults.x0);
    let sup = raw
        .times
        .iter()
        .zip(&raw.states)
        .map(|(&t, zh)| {
            let e = zh - ball.gm.apply(&exec.state_dense_clamped(t));
            (e - (&a_lc * t).exp() * &e0).norm()
        })
        .fold(0.0, f64::max);
    let matrix_gap = (observer.error_matrix() - &a_lc).norm();
    assert!(verdict(
        4,
        "observer error vs exp((A+LC)t) e0",
        sup <= 1e-6 && matrix_gap <= 1e-12,
        format!("sup {sup:.2e} <= 1e-6 on [0, 5], |A+LC - oracle| {matrix_gap:.1e}"),
    ));
}

#[test]
fn criterion_05_windowed_convergence() {
    let reg = Registry::builtin();
    let cfg = ScenarioConfig::new("bouncing_ball", Mode::Estimate);
    let ball = build_bundle(&cfg, &reg).unwrap();
    let resolved = resolve(&cfg, &ball).unwrap();
    assert_eq!(resolved.x0.as_slice(), &[2.0, -3.0]);
    let (exec, run) = observer_run(&ball, &resolved).unwrap();

    // Dwell function from trajectories across the energy band, lowest energy included.
    let est: Vec<HybridExecution> = [(1.0, -1.0), (1.0, 0.3), (3.0, -0.5), (10.0, 0.9), (30.0, 0.0), (50.0, 1.0)]
        .iter()
        .map(|&(e, s)| ball_exec(&ball, &ball_state(e, s), 10.0))
        .collect();
    let dwell = estimate_dwell_function(&ball.sys, &ball.sampler.jump, &est, &[0.01, 0.02, 0.05, 0.1]).unwrap();
    let eps = 0.05;
    let alpha = dwell.alpha(eps);
    let report = estimation_error_report(&run.times, &run.errors(), &exec.jump_times(), alpha, eps);
    let in_e = run.x_hat.iter().all(|x| ball.inv_set.contains(x));
    let t = report.settling_time;
    assert!(verdict(
        5,
        "windowed convergence, bouncing_ball",
        report.pass && t.is_some_and(|t| t <= 10.0) && report.max_err_on_windows < eps && in_e,
        format!(
            "alpha {alpha:.4}, T {t:?} <= 10, max error {:.4} < {eps}, x_hat in E: {in_e}",
            report.max_err_on_windows
        ),
    ));
}

#[test]
fn criterion_06_graphical_closeness() {
    let reg = Registry::builtin();
    let cfg = ScenarioConfig::new("bouncing_ball", Mode::Estimate);
    let ball = build_bundle(&cfg, &reg).unwrap();
    let resolved = resolve(&cfg, &ball).unwrap();
    let (_, run) = observer_run(&ball, &resolved).unwrap();
    let r = graphical_closeness(&run.times, &run.x, &run.x_hat, 0.1, 0.1);
    assert!(verdict(
        6,
        "graphical closeness, bouncing_ball",
        r.pass && r.t_star.is_some(),
        format!("eps 0.1, T* {:?}, last gap {:.4}", r.t_star, r.worst_gap),
    ));
}

#[test]
fn criterion_07_ripple_linearity() {
    let rip = bundle("ripple");
    let a = ripple::glued_generator();
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut jumps = 0;
    for x0 in [vec2(2.0, 0.0), vec2(1.0, -1.5), vec2(0.5, 0.8), vec2(2.8, 0.4)] {
        let exec = simulate_hybrid(&rip.sys, &x0, &ZeroInput(0), &SimParams::with_horizon(6.0)).unwrap();
        jumps += exec.jumps.len();
        for i in 1..5999 {
            let t = i as f64 * 1e-3;
            let zp = rip.gm.apply(&exec.state_dense_clamped(t + h));
            let zm = rip.gm.apply(&exec.state_dense_clamped(t - h));
            let z = rip.gm.apply(&exec.state_dense_clamped(t));
            worst = worst.max(((zp - zm) / (2.0 * h) - &a * z).norm());
        }
    }
    let (lip, _) = estimate_glued_lipschitz(
        &rip.sys,
        &rip.glued,
        GluedLipschitzOptions {
            n_pairs: 10_000,
            seed: 7,
        },
    )
    .unwrap();
    let spectral = a.singular_values().max();
    assert!(verdict(
        7,
        "ripple glued linearity",
        worst <= 1e-4 && (lip.constant - spectral).abs() <= 0.05,
        format!(
            "FD derivative gap {worst:.2e} <= 1e-4 across {jumps} jumps, Lipschitz {:.4} vs |A| = {spectral}",
            lip.constant
        ),
    ));
}

#[test]
fn criterion_08_tracking() {
    let rdi = bundle("reflected_di");
    let tr = rdi.tracking.as_ref().unwrap();
    let cfg = ScenarioConfig::new("reflected_di", Mode::Track);
    let resolved = resolve(&cfg, &rdi).unwrap();
    let run = tracking_run(&rdi, &resolved).unwrap();

    // Closed-loop glued error matrix and its eigenvalues.
    let k = Matrix::from_row_slice(1, 2, &[-0.6, -1.55]);
    let acl = &tr.a_lin + &tr.b_lin * &k;
    let mut eig: Vec<f64> = acl.complex_eigenvalues().iter().map(|c| c.re).collect();
    eig.sort_by(f64::total_cmp);
    let eig_ok = (eig[0] + 0.8).abs() < 1e-9 && (eig[1] + 0.75).abs() < 1e-9;

    // The glued error follows exp(Acl t) e0 up to integration error.
    let e0 = &run.zeta[0] - &run.zeta_r[0];
    let envelope = run
        .times
        .iter()
        .zip(run.zeta.iter().zip(&run.zeta_r))
        .map(|(&t, (z, zr))| ((z - zr) - (&acl * t).exp() * &e0).norm())
        .fold(0.0, f64::max);
    let at20 = run
        .times
        .iter()
        .position(|&t| t >= 20.0)
        .map(|i| run.glued_err[i..].iter().copied().fold(0.0, f64::max))
        .unwrap();

    let out = glued_cli::pipeline::run_pipeline(
        &ScenarioConfig {
            checks: glued_cli::config::ChecksSection {
                epsilon: 0.1,
                ..Default::default()
            },
            ..cfg
        },
        &rdi,
    )
    .unwrap();
    let windowed = out.checks.iter().find(|c| c.name == "windowed_error").unwrap().pass;
    let continuity = glued_error_continuity(&run);
    let plant = run.exec.jump_times();
    let reference = tr.reference.jump_times();
    let asynchronous = plant.iter().zip(&reference).any(|(a, b)| (a - b).abs() > 1e-3);
    assert!(verdict(
        8,
        "tracking, reflected_di",
        eig_ok && at20 < 1e-2 && envelope < 1e-3 && windowed && continuity.pass && asynchronous,
        format!(
            "eig {eig:?}, max |zeta - zeta_r| after t=20 {at20:.2e} < 1e-2, gap to exp(Acl t) e0 {envelope:.2e}, \
             windowed report at eps 0.1: {windowed}, max increment {:.2e} <= {:.2e}",
            continuity.max_increment, continuity.bound
        ),
    ));
}

/// Distance from a ball state to the impact ray `{x1 = 0, x2 <= 0}`.
fn ball_jump_distance(x: &Vector) -> f64 {
    if x[1] <= 0.0 {
        x[0].abs()
    } else {
        x[0].hypot(x[1])
    }
}

#[test]
fn criterion_09_bilipschitz() {
    let ball = bouncing_ball(BallParams::default()).unwrap();
    let member = ball.inv_set.membership.clone();
    let region = RegionSampler::new(
        ball.inv_set.parameterization.clone().unwrap(),
        Arc::new(move |x: &Vector| member(x) && ball_jump_distance(x) >= 0.1),
    );
    let estimates: Vec<f64> = [1u64, 2, 3]
        .iter()
        .map(|&seed| {
            let opts = BilipschitzOptions {
                n_pairs: 100_000,
                seed,
                refine: true,
            };
            estimate_bilipschitz(&ball.gm, &region, opts).unwrap().constant
        })
        .collect();
    let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().copied().fold(0.0, f64::max);
    let spread = hi / lo - 1.0;

    let fresh = bilipschitz_pairs(&region, 100_000, 0xf7e5, None).unwrap();
    let violations = fresh
        .iter()
        .filter(|(x, y)| (x - y).norm() > 1.1 * hi * (ball.gm.apply(x) - ball.gm.apply(y)).norm())
        .count();

    // Negative control: drop the margin and add seam pairs ever closer to D.
    let member = ball.inv_set.membership.clone();
    let whole = RegionSampler::new(ball.inv_set.parameterization.clone().unwrap(), member);
    let jump_part = ball.inv_set.jump_part.clone().unwrap();
    let seam: Vec<f64> = [(-2.0, -1.0), (-4.0, -3.0), (-6.0, -5.0)]
        .iter()
        .map(|&(a, b)| {
            let gen = seam_pair_generator(&ball.sys, jump_part.clone(), a, b);
            let pairs = bilipschitz_pairs(&whole, 3_000, 11, Some(&*gen)).unwrap();
            let opts = BilipschitzOptions {
                n_pairs: 3_000,
                seed: 11,
                refine: false,
            };
            estimate_bilipschitz_on(&ball.gm, &whole, &pairs, opts).unwrap().constant
        })
        .collect();
    let blows_up = seam.windows(2).all(|w| w[1] > 10.0 * w[0]) && seam[2] > 1e3 * hi;

    assert!(verdict(
        9,
        "bi-Lipschitz estimate on E minus O_D(0.1)",
        hi.is_finite() && spread <= 0.05 && violations == 0 && blows_up,
        format!(
            "L {estimates:.4?}, spread {:.2}% <= 5%, {violations} of {} fresh pairs above 1.1 L, \
             seam-pair quotients {}",
            100.0 * spread,
            fresh.len(),
            sci(&seam)
        ),
    ));
}

#[test]
fn criterion_10_dwell_function() {
    let ball = bundle("bouncing_ball");
    let est: Vec<HybridExecution> = [(1.0, -1.0), (1.0, 0.3), (3.0, -0.5), (10.0, 0.9), (30.0, 0.0), (50.0, 1.0)]
        .iter()
        .map(|&(e, s)| ball_exec(&ball, &ball_state(e, s), 10.0))
        .collect();
    let held: Vec<HybridExecution> = [(1.5, 0.1), (2.0, -0.9), (40.0, 0.5), (1.0, -0.7), (20.0, 0.2), (1.2, 0.95)]
        .iter()
        .map(|&(e, s)| ball_exec(&ball, &ball_state(e, s), 10.0))
        .collect();
    let grid = [0.001, 0.003, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3];
    let dwell = estimate_dwell_function(&ball.sys, &ball.sampler.jump, &est, &grid).unwrap();
    let monotone = dwell.alpha_values.windows(2).all(|w| w[0] <= w[1]);
    let shrinking = dwell.alpha_values[0] < 1e-3 && dwell.alpha_values[0] < dwell.alpha_values[2];
    // Slowest impact in the band is at speed sqrt(2): the state is within eps
    // of the jump set for about eps / sqrt(2) on either side.
    let slope = dwell.alpha(0.001) / 0.001;
    let slope_ok = (slope * 2f64.sqrt() - 1.0).abs() < 0.05;
    let violations = dwell_violations(&ball.sys, &ball.sampler.jump, &dwell, &held).unwrap();
    assert!(verdict(
        10,
        "dwell function, bouncing_ball",
        monotone && shrinking && slope_ok && violations.is_empty(),
        format!(
            "alpha {:.4?} on eps {grid:?}, alpha/eps at 1e-3 {slope:.4} vs 1/sqrt(2), {} held-out violations",
            dwell.alpha_values,
            violations.len()
        ),
    ));
}

#[test]
fn criterion_11_rk4_order() {
    // The plant arc is quadratic in t, which RK4 integrates exactly; the glued
    // arc carries sqrt(zeta_1) and shows the fourth order.
    let ball = bundle("bouncing_ball");
    let x0 = vec2(5.0, 2.0);
    let horizon = 4.0;
    let exact_x = |t: f64| vec2(5.0 + 2.0 * t - 0.5 * t * t, 2.0 - t);
    let plant_err = {
        let exec = ball_exec(&ball, &x0, horizon);
        assert!(exec.jumps.is_empty());
        (exec.state_dense_clamped(horizon) - exact_x(horizon)).norm()
    };
    let z0 = ball.gm.apply(&x0);
    let z_exact = ball.gm.apply(&exact_x(horizon));
    let errors: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&h| {
            let traj = simulate_glued(&ball.glued, &z0, &ZeroInput(0), horizon, h).unwrap();
            (traj.states.last().unwrap() - &z_exact).norm()
        })
        .collect();
    let factors: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    assert!(verdict(
        11,
        "RK4 convergence on a jump-free ball arc",
        factors.iter().all(|&f| f >= 8.0) && plant_err < 1e-10,
        format!(
            "glued errors {}, factors {factors:.2?} >= 8, plant arc error {plant_err:.1e}",
            sci(&errors)
        ),
    ));
}

#[test]
fn criterion_12_determinism() {
    let reg = Registry::builtin();
    let mut identical = true;
    let mut compared = 0;
    for (id, mode) in [("bouncing_ball", Mode::Estimate), ("reflected_di", Mode::Track), ("ripple", Mode::Analyze)] {
        let mut cfg = ScenarioConfig::new(id, mode);
        cfg.seed = 42;
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_config(&cfg, &reg, a.path()).unwrap();
        let rb = run_config(&cfg, &reg, b.path()).unwrap();
        identical &= ra.manifest.files == rb.manifest.files;
        for f in &ra.manifest.files {
            let da = std::fs::read(a.path().join(&f.path)).unwrap();
            let db = std::fs::read(b.path().join(&f.path)).unwrap();
            identical &= da == db;
            compared += 1;
        }
    }
    assert!(verdict(
        12,
        "determinism of run_scenario",
        identical && compared >= 6,
        format!("{compared} CSV/JSON files byte-identical across repeated seeded runs"),
    ));
}
