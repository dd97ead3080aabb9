//! Tracking through the glued domain with a relaxed matching feedback.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::GluingMap;
use crate::hybrid::{simulate_hybrid, HybridExecution, HybridSystemDef, SimParams};
use crate::linalg;
use crate::ode::{integrate, InputSignal, Trajectory};
use crate::report::CheckReport;
use crate::{MatFn, Matrix, Predicate, VecFn, Vector};

/// A reference trajectory: an execution of the plant under `u_r`.
#[derive(Clone)]
pub struct ReferenceBundle {
    pub exec: HybridExecution,
    pub u_r: Arc<dyn InputSignal>,
    /// Compact container `R` of the reference states.
    pub container: Predicate,
}

impl std::fmt::Debug for ReferenceBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceBundle")
            .field("jump_times", &self.jump_times())
            .finish_non_exhaustive()
    }
}

impl ReferenceBundle {
    /// Simulates the reference from `r0` under `u_r`.
    pub fn simulate(
        sys: &HybridSystemDef,
        r0: &Vector,
        u_r: Arc<dyn InputSignal>,
        params: &SimParams,
        container: Predicate,
    ) -> Result<Self> {
        let exec = simulate_hybrid(sys, r0, u_r.as_ref(), params)?;
        Ok(Self {
            exec,
            u_r,
            container,
        })
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.exec.jump_times()
    }

    /// `r(t)` on the interval containing `piece`.
    pub fn state(&self, t: f64, piece: f64) -> Vector {
        self.exec.state_in_piece(t, piece)
    }

    /// Right-continuous `r(t)`.
    pub fn at(&self, t: f64) -> Vector {
        self.exec.state_dense_clamped(t)
    }

    pub fn input(&self, t: f64, piece: f64) -> Vector {
        self.u_r.value(t, &self.state(t, piece), piece)
    }

    /// First reference jump or input switch strictly after `t`.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let jump = self.exec.jumps.iter().map(|j| j.time).find(|&tau| tau > t);
        match (jump, self.u_r.next_breakpoint(t)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Re-simulation of the stored reference and the container check.
    pub fn validate(&self, sys: &HybridSystemDef, params: &SimParams) -> Result<(CheckReport, CheckReport)> {
        let again = simulate_hybrid(sys, self.exec.initial_state(), self.u_r.as_ref(), params)?;
        let samples = self.exec.flow_samples();
        let c1 = CheckReport::max_residual(
            "C1_reference_is_execution",
            1e-5,
            samples
                .iter()
                .map(|(t, x)| ((again.state_dense_clamped(*t) - x).norm(), x)),
        );
        let c2 = CheckReport::max_residual(
            "C2_reference_in_container",
            0.0,
            samples
                .iter()
                .map(|(_, x)| (if (self.container)(x) && (sys.in_flow_set)(x) { 0.0 } else { 1.0 }, x)),
        );
        Ok((c1, c2))
    }
}

/// Input transform `u = gamma(x) (v + kappa(x))`.
#[derive(Clone)]
pub struct MatchingFeedback {
    pub gamma: MatFn,
    pub kappa: VecFn,
}

impl std::fmt::Debug for MatchingFeedback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatchingFeedback").finish_non_exhaustive()
    }
}

pub const GAMMA_DET_FLOOR: f64 = 1e-8;

impl MatchingFeedback {
    /// `gamma = I`, `kappa = 0`.
    pub fn identity(p: usize) -> Self {
        Self {
            gamma: Arc::new(move |_| Matrix::identity(p, p)),
            kappa: Arc::new(move |_| Vector::zeros(p)),
        }
    }

    pub fn gamma_inverse(&self, x: &Vector) -> Result<Matrix> {
        let g = (self.gamma)(x);
        if g.determinant().abs() <= GAMMA_DET_FLOOR {
            return Err(Error::SingularGamma(x.iter().copied().collect()));
        }
        g.try_inverse()
            .ok_or_else(|| Error::SingularGamma(x.iter().copied().collect()))
    }

    /// Smallest `|det gamma(x)|` over samples of `C`.
    pub fn check_invertible(&self, samples: &[Vector]) -> CheckReport {
        CheckReport::min_margin(
            "gamma_invertible",
            GAMMA_DET_FLOOR,
            samples.iter().map(|x| ((self.gamma)(x).determinant().abs(), x)),
        )
    }
}

/// Residuals of the two relaxed matching conditions on the jump set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedMatchingReport {
    /// `dpsi b gamma` agrees at `x` and `g(x)`.
    pub input_condition: CheckReport,
    /// `dpsi (a + b gamma kappa)` agrees at `x` and `g(x)`.
    pub drift_condition: CheckReport,
}

impl RelaxedMatchingReport {
    pub fn pass(&self) -> bool {
        self.input_condition.pass && self.drift_condition.pass
    }
}

fn glued_input_matrix(sys: &HybridSystemDef, gm: &GluingMap, mf: &MatchingFeedback, x: &Vector) -> Result<Matrix> {
    let aff = sys.affine.as_ref().ok_or(Error::NotInputAffine)?;
    Ok(gm.jacobian(x) * (aff.input_matrix)(x) * (mf.gamma)(x))
}

fn glued_drift(sys: &HybridSystemDef, gm: &GluingMap, mf: &MatchingFeedback, x: &Vector) -> Result<Vector> {
    let aff = sys.affine.as_ref().ok_or(Error::NotInputAffine)?;
    let inner = (aff.drift)(x) + (aff.input_matrix)(x) * (mf.gamma)(x) * (mf.kappa)(x);
    Ok(gm.jacobian(x) * inner)
}

pub fn check_relaxed_matching(
    sys: &HybridSystemDef,
    gm: &GluingMap,
    mf: &MatchingFeedback,
    d_samples: &[Vector],
) -> Result<RelaxedMatchingReport> {
    if sys.affine.is_none() {
        return Err(Error::NotInputAffine);
    }
    if d_samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut b_items = Vec::with_capacity(d_samples.len());
    let mut a_items = Vec::with_capacity(d_samples.len());
    for x in d_samples {
        let gx = sys.jump(x);
        let b = (glued_input_matrix(sys, gm, mf, x)? - glued_input_matrix(sys, gm, mf, &gx)?).norm();
        let a = (glued_drift(sys, gm, mf, x)? - glued_drift(sys, gm, mf, &gx)?).norm();
        b_items.push((b, x));
        a_items.push((a, x));
    }
    Ok(RelaxedMatchingReport {
        input_condition: CheckReport::max_residual("relaxed_matching_input", 1e-8, b_items),
        drift_condition: CheckReport::max_residual("relaxed_matching_drift", 1e-8, a_items),
    })
}

/// The glued control system `zeta' = a_psi(zeta) + b_psi(zeta) v`.
#[derive(Clone)]
pub struct MatchedGluedControl {
    pub a_psi: VecFn,
    pub b_psi: MatFn,
    pub gluing: GluingMap,
    pub matching: RelaxedMatchingReport,
}

impl std::fmt::Debug for MatchedGluedControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatchedGluedControl")
            .field("matching", &self.matching)
            .finish_non_exhaustive()
    }
}

impl MatchedGluedControl {
    pub fn field(&self, zeta: &Vector, v: &Vector) -> Vector {
        (self.a_psi)(zeta) + (self.b_psi)(zeta) * v
    }
}

/// Composes `a_psi = dpsi (a + b gamma kappa)` and `b_psi = dpsi b gamma` at
/// `psi^{-1}(zeta)` after checking the relaxed matching conditions.
pub fn build_matched_glued_control_system(
    sys: &HybridSystemDef,
    gm: &GluingMap,
    mf: &MatchingFeedback,
    d_samples: &[Vector],
) -> Result<MatchedGluedControl> {
    let matching = check_relaxed_matching(sys, gm, mf, d_samples)?;
    if !matching.pass() {
        let worst = if matching.input_condition.pass {
            &matching.drift_condition
        } else {
            &matching.input_condition
        };
        return Err(Error::MatchingViolation {
            residual: worst.worst_residual,
            point: worst.worst_point.clone().unwrap_or_default(),
        });
    }
    let (s1, g1, m1) = (sys.clone(), gm.clone(), mf.clone());
    let a_psi: VecFn = Arc::new(move |zeta: &Vector| {
        let x = (g1.psi_inv)(zeta);
        glued_drift(&s1, &g1, &m1, &x).expect("input-affine checked")
    });
    let (s2, g2, m2) = (sys.clone(), gm.clone(), mf.clone());
    let b_psi: MatFn = Arc::new(move |zeta: &Vector| {
        let x = (g2.psi_inv)(zeta);
        glued_input_matrix(&s2, &g2, &m2, &x).expect("input-affine checked")
    });
    Ok(MatchedGluedControl {
        a_psi,
        b_psi,
        gluing: gm.clone(),
        matching,
    })
}

/// Seam continuity of `a_psi` and `b_psi`: both evaluated through `x` and
/// through `g(x)` for jump samples `x`.
pub fn check_glued_control_seam(
    sys: &HybridSystemDef,
    ctrl: &MatchedGluedControl,
    mf: &MatchingFeedback,
    d_samples: &[Vector],
) -> Result<CheckReport> {
    let mut items = Vec::with_capacity(d_samples.len());
    for x in d_samples {
        let gx = sys.jump(x);
        let zeta = ctrl.gluing.apply(&gx);
        let through_x = glued_input_matrix(sys, &ctrl.gluing, mf, x)?;
        let b_res = ((ctrl.b_psi)(&zeta) - through_x).norm();
        let a_res = ((ctrl.a_psi)(&zeta) - glued_drift(sys, &ctrl.gluing, mf, x)?).norm();
        items.push((b_res.max(a_res), x));
    }
    Ok(CheckReport::max_residual("glued_control_seam", 1e-8, items))
}

/// Linear glued law `v = K (zeta - zeta_r) + v_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedTrackingLaw {
    pub gain: Matrix,
}

impl GluedTrackingLaw {
    /// Accepts `K` only if `A + B K` is Hurwitz with margin `1e-6`.
    pub fn new(gain: Matrix, a_lin: &Matrix, b_lin: &Matrix) -> Result<Self> {
        let max_real = linalg::max_real_eigenvalue(&(a_lin + b_lin * &gain));
        if max_real > -1e-6 {
            return Err(Error::NotHurwitz { max_real });
        }
        Ok(Self { gain })
    }

    /// No stability check, e.g. for the open-loop `K = 0` experiment.
    pub fn unchecked(gain: Matrix) -> Self {
        Self { gain }
    }

    pub fn eval(&self, v_r: &Vector, zeta_r: &Vector, zeta: &Vector) -> Vector {
        &self.gain * (zeta - zeta_r) + v_r
    }
}

/// `u_c(u_r, r, x) = gamma(x) (v_c(gamma(r)^{-1} (u_r - kappa(r)), psi(r), psi(x)) + kappa(x))`.
#[derive(Clone, Debug)]
pub struct TrackingController {
    pub feedback: MatchingFeedback,
    pub gluing: GluingMap,
    pub law: GluedTrackingLaw,
}

pub fn tracking_controller(mf: &MatchingFeedback, gm: &GluingMap, law: &GluedTrackingLaw) -> TrackingController {
    TrackingController {
        feedback: mf.clone(),
        gluing: gm.clone(),
        law: law.clone(),
    }
}

impl TrackingController {
    pub fn glued_reference_input(&self, u_r: &Vector, r: &Vector) -> Result<Vector> {
        Ok(self.feedback.gamma_inverse(r)? * (u_r - (self.feedback.kappa)(r)))
    }

    pub fn control(&self, u_r: &Vector, r: &Vector, x: &Vector) -> Result<Vector> {
        let v_r = self.glued_reference_input(u_r, r)?;
        let v = self.law.eval(&v_r, &self.gluing.apply(r), &self.gluing.apply(x));
        let gamma = (self.feedback.gamma)(x);
        if gamma.determinant().abs() <= GAMMA_DET_FLOOR {
            return Err(Error::SingularGamma(x.iter().copied().collect()));
        }
        Ok(gamma * (v + (self.feedback.kappa)(x)))
    }
}

/// `zeta_r(t) = psi(r(t))`, right-continuous.
pub fn glued_reference<'a>(gm: &'a GluingMap, reference: &'a ReferenceBundle) -> impl Fn(f64) -> Vector + 'a {
    let gm = gm.clone();
    move |t| gm.apply(&reference.at(t))
}

/// Largest `|zeta_r(tau^-) - zeta_r(tau)|` over the reference jumps.
pub fn glued_reference_continuity(gm: &GluingMap, reference: &ReferenceBundle) -> CheckReport {
    let items: Vec<(f64, Vector)> = reference
        .exec
        .jumps
        .iter()
        .map(|j| {
            let pre = Vector::from_vec(j.pre.clone());
            let post = Vector::from_vec(j.post.clone());
            ((gm.apply(&pre) - gm.apply(&post)).norm(), pre)
        })
        .collect();
    CheckReport::max_residual("glued_reference_continuity", 1e-7, items.iter().map(|(r, x)| (*r, x)))
}

struct ClosedLoopInput<'a> {
    ctrl: &'a TrackingController,
    reference: &'a ReferenceBundle,
    p: usize,
}

impl InputSignal for ClosedLoopInput<'_> {
    fn dim(&self) -> usize {
        self.p
    }

    fn value(&self, t: f64, x: &Vector, piece: f64) -> Vector {
        let r = self.reference.state(t, piece);
        let u_r = self.reference.input(t, piece);
        self.ctrl
            .control(&u_r, &r, x)
            .unwrap_or_else(|_| Vector::from_element(self.p, f64::NAN))
    }

    fn next_breakpoint(&self, t: f64) -> Option<f64> {
        self.reference.next_breakpoint(t)
    }
}

/// Closed-loop record on the plant sample times.
#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub exec: HybridExecution,
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub r: Vec<Vector>,
    pub zeta: Vec<Vector>,
    pub zeta_r: Vec<Vector>,
    pub u: Vec<Vector>,
    pub u_r: Vec<Vector>,
    pub glued_err: Vec<f64>,
    pub state_err: Vec<f64>,
}

/// Simulates the plant under `u = u_c(u_r(t), r(t), x)`.
pub fn simulate_closed_loop(
    sys: &HybridSystemDef,
    ctrl: &TrackingController,
    reference: &ReferenceBundle,
    x0: &Vector,
    params: &SimParams,
) -> Result<TrackingRun> {
    let input = ClosedLoopInput {
        ctrl,
        reference,
        p: sys.p,
    };
    let exec = simulate_hybrid(sys, x0, &input, params)?;
    let samples = exec.flow_samples();
    let mut run = TrackingRun {
        exec: exec.clone(),
        times: Vec::with_capacity(samples.len()),
        x: Vec::new(),
        r: Vec::new(),
        zeta: Vec::new(),
        zeta_r: Vec::new(),
        u: Vec::new(),
        u_r: Vec::new(),
        glued_err: Vec::new(),
        state_err: Vec::new(),
    };
    for (t, x) in samples {
        let r = reference.at(t);
        let u_r = reference.input(t, t);
        let u = ctrl.control(&u_r, &r, &x)?;
        let zeta = ctrl.gluing.apply(&x);
        let zeta_r = ctrl.gluing.apply(&r);
        run.glued_err.push((&zeta - &zeta_r).norm());
        run.state_err.push((&x - &r).norm());
        run.times.push(t);
        run.x.push(x);
        run.r.push(r);
        run.zeta.push(zeta);
        run.zeta_r.push(zeta_r);
        run.u.push(u);
        run.u_r.push(u_r);
    }
    Ok(run)
}

struct GluedClosedLoopInput<'a> {
    ctrl: &'a TrackingController,
    reference: &'a ReferenceBundle,
    p: usize,
}

impl InputSignal for GluedClosedLoopInput<'_> {
    fn dim(&self) -> usize {
        self.p
    }

    /// The glued feedback `v` for the current glued state.
    fn value(&self, t: f64, zeta: &Vector, piece: f64) -> Vector {
        let r = self.reference.state(t, piece);
        let u_r = self.reference.input(t, piece);
        match self.ctrl.glued_reference_input(&u_r, &r) {
            Ok(v_r) => self.ctrl.law.eval(&v_r, &self.ctrl.gluing.apply(&r), zeta),
            Err(_) => Vector::from_element(self.p, f64::NAN),
        }
    }

    fn next_breakpoint(&self, t: f64) -> Option<f64> {
        self.reference.next_breakpoint(t)
    }
}

/// Direct integration of `zeta' = a_psi(zeta) + b_psi(zeta) v_c(v_r, zeta_r, zeta)`.
pub fn simulate_glued_closed_loop(
    glued: &MatchedGluedControl,
    ctrl: &TrackingController,
    reference: &ReferenceBundle,
    zeta0: &Vector,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    let input = GluedClosedLoopInput {
        ctrl,
        reference,
        p: ctrl.law.gain.nrows(),
    };
    integrate(
        |_, z, v| glued.field(z, v),
        &input,
        zeta0,
        t_end,
        step,
        |t, z| {
            if (glued.gluing.glued_domain)(z) {
                Ok(())
            } else {
                Err(Error::LeftGluedDomain { t })
            }
        },
    )
}

/// Largest increment of the glued error between consecutive samples, against
/// the bound `dt * (|zeta'| + |zeta_r'|)` from finite differences of the stored
/// glued states away from their own seams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub max_increment: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn glued_error_continuity(run: &TrackingRun) -> ContinuityReport {
    let mut max_increment: f64 = 0.0;
    let mut max_rate: f64 = 0.0;
    let mut max_dt: f64 = 0.0;
    for i in 1..run.times.len() {
        let dt = run.times[i] - run.times[i - 1];
        if dt <= 0.0 {
            continue;
        }
        max_dt = max_dt.max(dt);
        max_increment = max_increment.max((run.glued_err[i] - run.glued_err[i - 1]).abs());
        let rate = ((&run.zeta[i] - &run.zeta[i - 1]).norm() + (&run.zeta_r[i] - &run.zeta_r[i - 1]).norm()) / dt;
        max_rate = max_rate.max(rate);
    }
    let bound = 1.1 * max_dt * max_rate;
    ContinuityReport {
        max_increment,
        bound,
        pass: max_increment <= bound,
    }
}

/// Largest tested radius of the initial glued error for which the closed loop
/// still reduces the glued error below `tol` at the horizon; bisection over the
/// radius along the direction `dir` from `zeta_r(0)`.
pub fn converging_radius(
    sys: &HybridSystemDef,
    ctrl: &TrackingController,
    reference: &ReferenceBundle,
    dir: &Vector,
    max_radius: f64,
    tol: f64,
    params: &SimParams,
) -> f64 {
    let zeta_r0 = ctrl.gluing.apply(reference.exec.initial_state());
    let dir = dir / dir.norm();
    let converges = |radius: f64| -> bool {
        let zeta0 = &zeta_r0 + &dir * radius;
        let Ok(x0) = ctrl.gluing.unglue(&zeta0) else {
            return false;
        };
        match simulate_closed_loop(sys, ctrl, reference, &x0, params) {
            Ok(run) => run.glued_err.last().is_some_and(|&e| e < tol),
            Err(_) => false,
        }
    };
    if converges(max_radius) {
        return max_radius;
    }
    let (mut lo, mut hi) = (0.0, max_radius);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if converges(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
