//! Ball of mass `m` under gravity `rho`, bouncing with restitution 1.
//!
//! State `(x1, x2)` is height and velocity, the output is the height. The
//! gluing function is built from the squared height and its Lie derivatives,
//! which puts the glued system in observer canonical form with output
//! injection.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gluing::{GluedOverrides, GluingMap, InvariantSetSpec};
use crate::hybrid::HybridSystemDef;
use crate::observer::{build_immersion_gluing, ImmersionSpec, OutputInjectionObserver};
use crate::report::CheckReport;
use crate::sampling::{sample_points, seeded_rng, StateSampler};
use crate::sets::{Chart, ParamSet};
use crate::{Matrix, VecFn, Vector};

use super::{apply_overrides, validate, vec2, vec3, ExampleBundle, ObserverSetup, ScenarioDefaults};

const SET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallParams {
    /// Gravity.
    pub rho: f64,
    pub mass: f64,
    /// Energy band `[delta_lo, delta_hi]` of the invariant set.
    pub delta_lo: f64,
    pub delta_hi: f64,
    /// Observer poles.
    pub poles: [f64; 3],
    pub x0: [f64; 2],
    pub horizon: f64,
}

impl Default for BallParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            mass: 1.0,
            delta_lo: 1.0,
            delta_hi: 50.0,
            poles: [-2.0, -3.0, -4.0],
            x0: [2.0, -3.0],
            horizon: 10.0,
        }
    }
}

impl BallParams {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("rho".to_string(), self.rho),
            ("mass".to_string(), self.mass),
            ("delta_lo".to_string(), self.delta_lo),
            ("delta_hi".to_string(), self.delta_hi),
            ("pole_1".to_string(), self.poles[0]),
            ("pole_2".to_string(), self.poles[1]),
            ("pole_3".to_string(), self.poles[2]),
            ("x0_1".to_string(), self.x0[0]),
            ("x0_2".to_string(), self.x0[1]),
            ("horizon".to_string(), self.horizon),
        ])
    }

    pub fn from_map(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        let [p1, p2, p3] = &mut p.poles;
        let [a, b] = &mut p.x0;
        apply_overrides(
            overrides,
            &mut [
                ("rho", &mut p.rho),
                ("mass", &mut p.mass),
                ("delta_lo", &mut p.delta_lo),
                ("delta_hi", &mut p.delta_hi),
                ("pole_1", p1),
                ("pole_2", p2),
                ("pole_3", p3),
                ("x0_1", a),
                ("x0_2", b),
                ("horizon", &mut p.horizon),
            ],
        )?;
        Ok(p)
    }
}

/// `sqrt(max(z, 0))`.
fn sqrt_pos(z: f64) -> f64 {
    z.max(0.0).sqrt()
}

pub fn psi(rho: f64, x: &Vector) -> Vector {
    vec3(x[0] * x[0], 2.0 * x[0] * x[1], 2.0 * x[1] * x[1] + 4.0 * rho * x[0])
}

pub fn psi_jacobian(rho: f64, x: &Vector) -> Matrix {
    Matrix::from_row_slice(3, 2, &[2.0 * x[0], 0.0, 2.0 * x[1], 2.0 * x[0], 4.0 * rho, 4.0 * x[1]])
}

/// Inverse on `C \ D`; a zero height returns the upward velocity.
pub fn psi_inv(rho: f64, z: &Vector) -> Vector {
    let x1 = sqrt_pos(z[0]);
    let speed = sqrt_pos((z[2] - 4.0 * rho * x1) / 2.0);
    let sign = if z[1] >= 0.0 { 1.0 } else { -1.0 };
    vec2(x1, sign * speed)
}

pub fn f_psi(rho: f64, z: &Vector) -> Vector {
    vec3(z[1], z[2] - 6.0 * rho * sqrt_pos(z[0]), 0.0)
}

pub fn energy(rho: f64, mass: f64, x: &Vector) -> f64 {
    mass * rho * x[0] + 0.5 * mass * x[1] * x[1]
}

/// State with energy `e` and normalized velocity `s in [-1, 1]`.
fn energy_point(rho: f64, mass: f64, e: f64, s: f64) -> Vector {
    vec2(e * (1.0 - s * s) / (mass * rho), s * (2.0 * e / mass).sqrt())
}

pub fn hybrid_system(rho: f64) -> HybridSystemDef {
    HybridSystemDef::new(
        "bouncing_ball",
        2,
        move |x, _| vec2(x[1], -rho),
        |x| -x,
        |x| -x[0],
        |x| x[0],
        |x| x[0] >= -SET_TOL && x.norm() > 0.0,
        |x| x[0].abs() <= SET_TOL && x[1] < 0.0,
    )
    .with_output(1, |x| Vector::from_element(1, x[0]))
    .with_guard_gradients(
        Arc::new(|_| vec2(-1.0, 0.0)),
        Arc::new(|_| vec2(1.0, 0.0)),
    )
}

pub fn invariant_set(rho: f64, mass: f64, lo: f64, hi: f64) -> InvariantSetSpec {
    let band = move |s_lo: f64, s_hi: f64| {
        ParamSet::single(Chart::new(vec![lo, s_lo], vec![hi, s_hi], move |p| {
            energy_point(rho, mass, p[0], p[1])
        }))
    };
    InvariantSetSpec {
        membership: Arc::new(move |x| {
            let e = energy(rho, mass, x);
            x[0] >= -SET_TOL && e >= lo - 1e-9 && e <= hi + 1e-9
        }),
        parameterization: Some(band(-1.0, 1.0)),
        jump_part: Some(band(-1.0, -1.0)),
        landing_part: Some(band(1.0, 1.0)),
    }
}

pub fn sampler(rho: f64) -> StateSampler {
    let flow = ParamSet {
        charts: vec![
            Chart::new(vec![0.0, -10.0], vec![10.0, 10.0], |s| s.clone()),
            Chart::new(vec![0.01], vec![10.0], |s| vec2(0.0, s[0])),
        ],
    };
    let jump = ParamSet::single(Chart::new(vec![-10.0], vec![-0.01], |s| vec2(0.0, s[0])));
    let _ = rho;
    StateSampler::new(flow, jump)
}

/// Gluing through the immersion construction, with the closed forms attached.
fn immersion_spec(rho: f64) -> ImmersionSpec {
    let grads: Vec<VecFn> = vec![
        Arc::new(|x: &Vector| vec2(2.0 * x[0], 0.0)),
        Arc::new(|x: &Vector| vec2(2.0 * x[1], 2.0 * x[0])),
        Arc::new(move |x: &Vector| vec2(4.0 * rho, 4.0 * x[1])),
    ];
    ImmersionSpec {
        h_star: Arc::new(|x| x[0] * x[0]),
        injections: vec![
            Arc::new(|_| 0.0),
            Arc::new(move |y| -6.0 * rho * sqrt_pos(y)),
            Arc::new(|_| 0.0),
        ],
        gradients: Some(grads),
        psi_inv: Arc::new(move |z| psi_inv(rho, z)),
        glued_domain: Arc::new(move |z| glued_domain(rho, z)),
    }
}

/// Necessary conditions for membership in `psi(C)`.
fn glued_domain(rho: f64, z: &Vector) -> bool {
    let tol = 1e-9;
    z[0] >= -tol && z[2] - 4.0 * rho * sqrt_pos(z[0]) >= -tol && z.norm() > 0.0
}

pub fn bouncing_ball(params: BallParams) -> Result<ExampleBundle> {
    let BallParams {
        rho,
        mass,
        delta_lo,
        delta_hi,
        ..
    } = params;
    if !(rho > 0.0) || !(mass > 0.0) {
        return Err(Error::InvalidParameter("rho and mass must be positive".into()));
    }
    if !(delta_lo > 0.0 && delta_lo < delta_hi) {
        return Err(Error::BadEnergyBand {
            lower: delta_lo,
            upper: delta_hi,
        });
    }
    let sys = hybrid_system(rho);
    let sampler = sampler(rho);
    let inv_set = invariant_set(rho, mass, delta_lo, delta_hi);

    let gm = GluingMap::new(3, move |x| psi(rho, x), move |z| psi_inv(rho, z), move |z| glued_domain(rho, z))
        .with_jacobian(move |x| psi_jacobian(rho, x));

    let overrides = GluedOverrides {
        f_psi: Some(Arc::new(move |z, _| f_psi(rho, z))),
        h_psi: Some(Arc::new(|z| Vector::from_element(1, sqrt_pos(z[0])))),
    };
    let validated = validate(&sys, &gm, &inv_set, &sampler, overrides, None, 0xba11)?;
    let mut summary = validated.summary;

    // The closed-form gluing must agree with the immersion construction.
    let mut rng = seeded_rng(0x1e5);
    let c_samples = sample_points(&sampler.flow, super::BUILD_COUNTS.flow, &mut rng);
    let d_samples = sample_points(&sampler.jump, super::BUILD_COUNTS.jump, &mut rng);
    let (imm, report) = build_immersion_gluing(&sys, &immersion_spec(rho), &d_samples, &c_samples)?;
    let agree = CheckReport::max_residual(
        "immersion_matches_closed_form",
        1e-9,
        c_samples.iter().map(|x| ((imm.apply(x) - gm.apply(x)).norm(), x)),
    );
    if !agree.pass {
        return Err(Error::Validation(format!("bouncing_ball: {}", agree.name)));
    }
    summary.extra.extend([report.i1, report.i2, agree]);

    let observer = OutputInjectionObserver::with_poles(
        &params.poles,
        Arc::new(|y| y * y),
        Arc::new(move |y_star| vec3(0.0, -6.0 * rho * sqrt_pos(y_star), 0.0)),
    );
    observer.check_hurwitz()?;

    Ok(ExampleBundle {
        id: "bouncing_ball".into(),
        sys,
        gm,
        inv_set,
        glued: validated.glued,
        sampler,
        observer: Some(ObserverSetup::OutputInjection {
            observer,
            zeta_hat0: Vector::zeros(3),
        }),
        tracking: None,
        defaults: ScenarioDefaults {
            x0: vec2(params.x0[0], params.x0[1]),
            horizon: params.horizon,
            step: 1e-3,
        },
        params: params.to_map(),
        validation: summary,
    })
}
