//! Planar linear plant on the half plane `x1 >= 0`, reflected through the
//! origin when it reaches `x1 = 0` moving left.
//!
//! The state is lifted with a mode sign `p` that flips at every reflection, so
//! `p x` evolves continuously. The input direction flips with `p`, which the
//! feedback `gamma = p` undoes.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gluing::{check_glued_field, GluedOverrides, GluingMap, InvariantSetSpec};
use crate::hybrid::{check_transversality, Boundary, HybridSystemDef, SimParams};
use crate::ode::PeriodicSwitch;
use crate::sampling::{sample_points, seeded_rng, StateSampler};
use crate::sets::{Chart, ParamSet};
use crate::tracking::{
    build_matched_glued_control_system, check_glued_control_seam, tracking_controller, GluedTrackingLaw,
    MatchingFeedback, ReferenceBundle,
};
use crate::{Matrix, Vector};

use super::{apply_overrides, validate, vec2, vec3, ExampleBundle, ScenarioDefaults, TrackingSetup, BUILD_COUNTS};

const SET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedDiParams {
    pub a: [[f64; 2]; 2],
    pub b: f64,
    pub gain: [f64; 2],
    pub u_r: PeriodicSwitch,
    pub r0: [f64; 2],
    pub x0: [f64; 2],
    pub horizon: f64,
    /// Half-width of the box used as the compact set.
    pub box_radius: f64,
}

impl Default for ReflectedDiParams {
    fn default() -> Self {
        Self {
            a: [[0.0, 1.0], [0.0, 0.0]],
            b: 1.0,
            gain: [-0.6, -1.55],
            u_r: PeriodicSwitch {
                period: 10.0,
                switch_phase: 4.0,
                first: -3.0,
                second: -2.0,
            },
            r0: [0.0, 6.0],
            x0: [3.0, 8.0],
            horizon: 25.0,
            box_radius: 20.0,
        }
    }
}

impl ReflectedDiParams {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("a11".to_string(), self.a[0][0]),
            ("a12".to_string(), self.a[0][1]),
            ("a21".to_string(), self.a[1][0]),
            ("a22".to_string(), self.a[1][1]),
            ("b".to_string(), self.b),
            ("k1".to_string(), self.gain[0]),
            ("k2".to_string(), self.gain[1]),
            ("ur_period".to_string(), self.u_r.period),
            ("ur_phase".to_string(), self.u_r.switch_phase),
            ("ur_first".to_string(), self.u_r.first),
            ("ur_second".to_string(), self.u_r.second),
            ("r0_1".to_string(), self.r0[0]),
            ("r0_2".to_string(), self.r0[1]),
            ("x0_1".to_string(), self.x0[0]),
            ("x0_2".to_string(), self.x0[1]),
            ("horizon".to_string(), self.horizon),
            ("box_radius".to_string(), self.box_radius),
        ])
    }

    pub fn from_map(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        let [[a11, a12], [a21, a22]] = &mut p.a;
        let [k1, k2] = &mut p.gain;
        let [r1, r2] = &mut p.r0;
        let [x1, x2] = &mut p.x0;
        apply_overrides(
            overrides,
            &mut [
                ("a11", a11),
                ("a12", a12),
                ("a21", a21),
                ("a22", a22),
                ("b", &mut p.b),
                ("k1", k1),
                ("k2", k2),
                ("ur_period", &mut p.u_r.period),
                ("ur_phase", &mut p.u_r.switch_phase),
                ("ur_first", &mut p.u_r.first),
                ("ur_second", &mut p.u_r.second),
                ("r0_1", r1),
                ("r0_2", r2),
                ("x0_1", x1),
                ("x0_2", x2),
                ("horizon", &mut p.horizon),
                ("box_radius", &mut p.box_radius),
            ],
        )?;
        Ok(p)
    }

    pub fn a_matrix(&self) -> Matrix {
        Matrix::from_row_slice(2, 2, &[self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1]])
    }

    pub fn b_matrix(&self) -> Matrix {
        Matrix::from_column_slice(2, 1, &[0.0, self.b])
    }

    pub fn gain_matrix(&self) -> Matrix {
        Matrix::from_row_slice(1, 2, &self.gain)
    }
}

/// `Sgn(zeta)`: the sign of `zeta1`, or of `zeta2` when `zeta1 = 0`.
pub fn glued_sign(z: &Vector) -> f64 {
    let lead = if z[0] != 0.0 { z[0] } else { z[1] };
    if lead >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn psi(x: &Vector) -> Vector {
    vec2(x[2] * x[0], x[2] * x[1])
}

pub fn psi_jacobian(x: &Vector) -> Matrix {
    Matrix::from_row_slice(2, 3, &[x[2], 0.0, x[0], 0.0, x[2], x[1]])
}

pub fn psi_inv(z: &Vector) -> Vector {
    let s = glued_sign(z);
    vec3(s * z[0], s * z[1], s)
}

pub fn hybrid_system(a: Matrix, b: f64) -> HybridSystemDef {
    let a_flow = a.clone();
    let a_drift = a;
    HybridSystemDef::new(
        "reflected_di",
        3,
        move |x, u| {
            let planar = &a_flow * vec2(x[0], x[1]);
            vec3(planar[0], planar[1] + b * u[0], 0.0)
        },
        |x| -x,
        |x| -x[0],
        |x| x[0],
        |x| x[0] >= -SET_TOL && vec2(x[0], x[1]).norm() > 0.0 && (x[2] * x[2] - 1.0).abs() <= SET_TOL,
        |x| x[0].abs() <= SET_TOL && x[1] < 0.0 && (x[2] * x[2] - 1.0).abs() <= SET_TOL,
    )
    .with_input_dim(1)
    .with_manifold(
        2,
        |x| Vector::from_element(1, x[2] * x[2] - 1.0),
        Some(Arc::new(|x: &Vector| Matrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0 * x[2]]))),
    )
    .with_guard_gradients(
        Arc::new(|_| vec3(-1.0, 0.0, 0.0)),
        Arc::new(|_| vec3(1.0, 0.0, 0.0)),
    )
    .with_input_affine(
        Arc::new(move |x: &Vector| {
            let planar = &a_drift * vec2(x[0], x[1]);
            vec3(planar[0], planar[1], 0.0)
        }),
        Arc::new(move |_| Matrix::from_column_slice(3, 1, &[0.0, b, 0.0])),
    )
}

/// Charts `(x1, x2) -> (x1, x2, p)` for both modes over `x1 in [x1_lo, x1_hi]`,
/// `x2 in [x2_lo, x2_hi]`.
fn lifted(x1: (f64, f64), x2: (f64, f64)) -> ParamSet {
    ParamSet {
        charts: [1.0, -1.0]
            .into_iter()
            .map(|p| Chart::new(vec![x1.0, x2.0], vec![x1.1, x2.1], move |s| vec3(s[0], s[1], p)))
            .collect(),
    }
}

pub fn invariant_set(radius: f64) -> InvariantSetSpec {
    InvariantSetSpec {
        membership: Arc::new(move |x| {
            x[0] >= -SET_TOL && x[0] <= radius && x[1].abs() <= radius && (x[2] * x[2] - 1.0).abs() <= SET_TOL
        }),
        parameterization: Some(lifted((0.0, radius), (-radius, radius))),
        jump_part: Some(lifted((0.0, 0.0), (-radius, 0.0))),
        landing_part: Some(lifted((0.0, 0.0), (0.0, radius))),
    }
}

pub fn sampler(radius: f64) -> StateSampler {
    StateSampler::new(
        lifted((0.0, radius), (-radius, radius)),
        lifted((0.0, 0.0), (-radius, -0.01)),
    )
    .with_escape(Arc::new(|x, s| vec3(s * x[0], s * x[1], x[2])))
}

/// Input values the checks range over.
fn check_inputs(params: &ReflectedDiParams) -> Vec<Vector> {
    let u = params.u_r;
    [-10.0, u.first, u.second, 0.0, 10.0]
        .into_iter()
        .map(|v| Vector::from_element(1, v))
        .collect()
}

pub fn reflected_double_integrator(params: ReflectedDiParams) -> Result<ExampleBundle> {
    if !(params.a[0][1] > 0.0) || params.b == 0.0 || !params.b.is_finite() {
        return Err(Error::InvalidParameter("need a12 > 0 and b != 0".into()));
    }
    if !(params.box_radius > 0.0) || !(params.horizon > 0.0) {
        return Err(Error::InvalidParameter("box_radius and horizon must be positive".into()));
    }
    let a = params.a_matrix();
    let b_lin = params.b_matrix();
    let law = GluedTrackingLaw::new(params.gain_matrix(), &a, &b_lin)?;

    let sys = hybrid_system(a.clone(), params.b);
    let sampler = sampler(params.box_radius);
    let inv_set = invariant_set(params.box_radius);
    let gm = GluingMap::new(2, psi, psi_inv, |z| z.norm() > 0.0).with_jacobian(psi_jacobian);

    let (a_g, b_g) = (a.clone(), b_lin.clone());
    let overrides = GluedOverrides {
        f_psi: Some(Arc::new(move |z, u| &a_g * z + &b_g * (glued_sign(z) * u[0]))),
        h_psi: None,
    };
    let validated = validate(&sys, &gm, &inv_set, &sampler, overrides, None, 0xd1)?;
    let mut summary = validated.summary;

    let inputs = check_inputs(&params);
    let mut rng = seeded_rng(0xd1d1);
    let c_samples = sample_points(&sampler.flow, BUILD_COUNTS.flow, &mut rng);
    let d_samples = sample_points(&sampler.jump, BUILD_COUNTS.jump, &mut rng);

    let mut field = check_glued_field(&sys, &validated.glued, &c_samples, Some(&inputs))?;
    field.name = "glued_field_with_input".into();
    let feedback = MatchingFeedback {
        gamma: Arc::new(|x: &Vector| Matrix::from_element(1, 1, x[2])),
        kappa: Arc::new(|_| Vector::zeros(1)),
    };
    let control = build_matched_glued_control_system(&sys, &gm, &feedback, &d_samples)?;
    let seam = check_glued_control_seam(&sys, &control, &feedback, &d_samples)?;
    let invertible = feedback.check_invertible(&c_samples);
    for (boundary, pts) in [
        (Boundary::Jump, d_samples.clone()),
        (Boundary::Landing, d_samples.iter().map(|x| sys.jump(x)).collect()),
    ] {
        let rep = check_transversality(&sys, boundary, &pts, Some(&inputs), None)?;
        if !rep.pass {
            return Err(Error::Validation(format!("reflected_di: {boundary:?} transversality under input")));
        }
    }
    let extras = [
        field,
        control.matching.input_condition.clone(),
        control.matching.drift_condition.clone(),
        seam,
        invertible,
    ];
    if let Some(bad) = extras.iter().find(|c| !c.pass) {
        return Err(Error::Validation(format!("reflected_di: {}", bad.name)));
    }
    summary.extra.extend(extras);

    let radius = params.box_radius;
    let reference = ReferenceBundle::simulate(
        &sys,
        &vec3(params.r0[0], params.r0[1], 1.0),
        Arc::new(params.u_r),
        &SimParams::with_horizon(params.horizon),
        Arc::new(move |x: &Vector| x[0].abs() <= radius && x[1].abs() <= radius),
    )?;
    let controller = tracking_controller(&feedback, &gm, &law);

    Ok(ExampleBundle {
        id: "reflected_di".into(),
        sys,
        gm,
        inv_set,
        glued: validated.glued,
        sampler,
        observer: None,
        tracking: Some(TrackingSetup {
            feedback,
            control,
            law,
            controller,
            reference,
            a_lin: a,
            b_lin,
        }),
        defaults: ScenarioDefaults {
            x0: vec3(params.x0[0], params.x0[1], 1.0),
            horizon: params.horizon,
            step: 1e-3,
        },
        params: params.to_map(),
        validation: summary,
    })
}
