//! Clockwise rotation on the cone `|angle| <= pi/3`, reflected across the
//! horizontal axis when it reaches the lower edge.
//!
//! Tripling the angle maps both edges of the cone to the negative real axis,
//! so the glued system is a rotation three times as fast.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, PI};
use std::sync::Arc;

use crate::error::Result;
use crate::gluing::{GluedOverrides, GluingMap, InvariantSetSpec};
use crate::hybrid::HybridSystemDef;
use crate::observer::EkfConfig;
use crate::sampling::StateSampler;
use crate::sets::{Chart, ParamSet};
use crate::{Matrix, Vector};

use super::{validate, vec2, ExampleBundle, ObserverSetup, ScenarioDefaults};

const SET_TOL: f64 = 1e-9;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Radii of the invariant annulus.
pub const E_RADII: (f64, f64) = (1.0, 3.0);

fn h1(x: &Vector) -> f64 {
    SQRT3 * x[0] + x[1]
}

fn h2(x: &Vector) -> f64 {
    SQRT3 * x[0] - x[1]
}

fn polar(r: f64, theta: f64) -> Vector {
    vec2(r * theta.cos(), r * theta.sin())
}

/// `r (cos 3 theta, sin 3 theta)` written without trigonometry.
pub fn psi(x: &Vector) -> Vector {
    let s = x.norm_squared();
    let (a, b) = (x[0], x[1]);
    vec2(4.0 * a.powi(3) / s - 3.0 * a, -4.0 * b.powi(3) / s + 3.0 * b)
}

pub fn psi_jacobian(x: &Vector) -> Matrix {
    let s = x.norm_squared();
    let s2 = s * s;
    let (a, b) = (x[0], x[1]);
    Matrix::from_row_slice(
        2,
        2,
        &[
            12.0 * a * a / s - 8.0 * a.powi(4) / s2 - 3.0,
            -8.0 * a.powi(3) * b / s2,
            8.0 * b.powi(3) * a / s2,
            -12.0 * b * b / s + 8.0 * b.powi(4) / s2 + 3.0,
        ],
    )
}

/// Angle of `zeta` in `(-pi, pi]`. The negative real axis is the image of
/// the jump and landing edges; it goes to the landing edge, rounding included.
fn glued_angle(z: &Vector) -> f64 {
    if z[1].abs() <= 1e-14 * z.norm() && z[0] < 0.0 {
        PI
    } else {
        z[1].atan2(z[0])
    }
}

pub fn psi_inv(z: &Vector) -> Vector {
    polar(z.norm(), glued_angle(z) / 3.0)
}

pub fn h_psi(z: &Vector) -> f64 {
    z.norm() * (glued_angle(z).abs() / 3.0).cos()
}

pub fn hybrid_system() -> HybridSystemDef {
    HybridSystemDef::new(
        "ripple",
        2,
        |x, _| vec2(x[1], -x[0]),
        |x| vec2(x[0], -x[1]),
        |x| -h1(x),
        h2,
        |x| h1(x) >= -SET_TOL && h2(x) >= -SET_TOL && x.norm() > 0.0,
        |x| h1(x).abs() <= SET_TOL && x[0] > 0.0,
    )
    .with_output(1, |x| Vector::from_element(1, x[0]))
    .with_guard_gradients(
        Arc::new(|_| vec2(-SQRT3, -1.0)),
        Arc::new(|_| vec2(SQRT3, -1.0)),
    )
}

fn sector(r_lo: f64, r_hi: f64, th_lo: f64, th_hi: f64) -> ParamSet {
    ParamSet::single(Chart::new(vec![r_lo, th_lo], vec![r_hi, th_hi], |p| polar(p[0], p[1])))
}

pub fn invariant_set() -> InvariantSetSpec {
    let (lo, hi) = E_RADII;
    InvariantSetSpec {
        membership: Arc::new(move |x| {
            let r = x.norm();
            h1(x) >= -SET_TOL && h2(x) >= -SET_TOL && r >= lo - 1e-9 && r <= hi + 1e-9
        }),
        parameterization: Some(sector(lo, hi, -FRAC_PI_3, FRAC_PI_3)),
        jump_part: Some(sector(lo, hi, -FRAC_PI_3, -FRAC_PI_3)),
        landing_part: Some(sector(lo, hi, FRAC_PI_3, FRAC_PI_3)),
    }
}

pub fn sampler() -> StateSampler {
    StateSampler::new(
        sector(0.05, 5.0, -FRAC_PI_3, FRAC_PI_3),
        sector(0.05, 5.0, -FRAC_PI_3, -FRAC_PI_3),
    )
}

/// Generator of the glued rotation.
pub fn glued_generator() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0])
}

pub fn ripple_model() -> Result<ExampleBundle> {
    let sys = hybrid_system();
    let sampler = sampler();
    let inv_set = invariant_set();
    let gm = GluingMap::new(2, psi, psi_inv, |z| z.norm() > 0.0).with_jacobian(psi_jacobian);
    let overrides = GluedOverrides {
        f_psi: Some(Arc::new(|z, _| glued_generator() * z)),
        h_psi: Some(Arc::new(|z| Vector::from_element(1, h_psi(z)))),
    };
    let validated = validate(&sys, &gm, &inv_set, &sampler, overrides, None, 0x819)?;
    Ok(ExampleBundle {
        id: "ripple".into(),
        sys,
        gm,
        inv_set,
        glued: validated.glued,
        sampler,
        observer: Some(ObserverSetup::Ekf {
            config: EkfConfig::default(),
            zeta_hat0: vec2(1.5, 0.5),
        }),
        tracking: None,
        defaults: ScenarioDefaults {
            x0: vec2(2.0, 0.0),
            horizon: 10.0,
            step: 1e-3,
        },
        params: BTreeMap::new(),
        validation: validated.summary,
    })
}
