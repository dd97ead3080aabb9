//! Observers in glued coordinates and the windowed error metrics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::{project_to_invariant, GluedSystem, GluingMap};
use crate::hybrid::{HybridExecution, HybridSystemDef};
use crate::linalg;
use crate::ode::{integrate, next_grid_time, rk4_step, InputSignal, Trajectory};
use crate::{Matrix, ScalarFn, VecFn, Vector};

/// Lie derivatives `L_f^i h` for `i = 0..=order`.
///
/// With `gradients = Some(g)`, `g[i]` is the gradient of the `i`-th function and
/// `L_f^{i+1} h = g[i] . f`; missing levels fall back to nested central
/// differences, whose accuracy is about `1e-4`.
pub fn lie_derivative_chain(
    f: VecFn,
    h: ScalarFn,
    gradients: Option<Vec<VecFn>>,
    order: i64,
) -> Result<Vec<ScalarFn>> {
    if order < 0 {
        return Err(Error::OrderNonPositive);
    }
    let order = order as usize;
    let gradients = gradients.unwrap_or_default();
    let mut chain: Vec<ScalarFn> = vec![h];
    for i in 0..order {
        let prev = chain[i].clone();
        let f = f.clone();
        let next: ScalarFn = match gradients.get(i) {
            Some(grad) => {
                let grad = grad.clone();
                Arc::new(move |x: &Vector| grad(x).dot(&f(x)))
            }
            None => Arc::new(move |x: &Vector| {
                linalg::gradient_central(|z| prev(z), x, LIE_FD_STEP).dot(&f(x))
            }),
        };
        chain.push(next);
    }
    Ok(chain)
}

const LIE_FD_STEP: f64 = 1e-3;

/// Data of an immersion into observer canonical form: `h* = phi(h)`, the
/// injection terms `a_1..a_m` as functions of `h*`, and the inverse on `psi(C)`.
#[derive(Clone)]
pub struct ImmersionSpec {
    pub h_star: ScalarFn,
    pub injections: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    /// Optional analytic gradients of `psi_1..psi_m`.
    pub gradients: Option<Vec<VecFn>>,
    pub psi_inv: VecFn,
    pub glued_domain: crate::Predicate,
}

/// Immersion check residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmersionReport {
    pub i1: crate::report::CheckReport,
    pub i2: crate::report::CheckReport,
}

/// Stacked gluing `psi_1 = h*`, `psi_{i+1} = L_f psi_i - a_i(h*)`.
///
/// (I1) is sampled on `d_samples` (`L_f^i h*` agrees at `x` and `g(x)` for
/// `i < m`) and (I2) on `c_samples` (`L_f psi_m = a_m(h*)`). The tolerance is
/// `1e-6` with analytic gradients and `1e-4` otherwise.
pub fn build_immersion_gluing(
    sys: &HybridSystemDef,
    spec: &ImmersionSpec,
    d_samples: &[Vector],
    c_samples: &[Vector],
) -> Result<(GluingMap, ImmersionReport)> {
    let m = spec.injections.len();
    if m == 0 {
        return Err(Error::OrderNonPositive);
    }
    if d_samples.is_empty() || c_samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let analytic = spec.gradients.as_ref().is_some_and(|g| g.len() >= m);
    let tol = if analytic { 1e-6 } else { 1e-4 };
    let flow: VecFn = {
        let sys = sys.clone();
        Arc::new(move |x: &Vector| sys.flow(x, &sys.zero_input()))
    };

    let mut comps: Vec<ScalarFn> = vec![spec.h_star.clone()];
    for i in 0..m {
        let prev = comps[i].clone();
        let f = flow.clone();
        let a_i = spec.injections[i].clone();
        let h_star = spec.h_star.clone();
        let grad = spec.gradients.as_ref().and_then(|g| g.get(i).cloned());
        let lie: ScalarFn = match grad {
            Some(g) => Arc::new(move |x: &Vector| g(x).dot(&f(x))),
            None => Arc::new(move |x: &Vector| {
                linalg::gradient_central(|z| prev(z), x, LIE_FD_STEP).dot(&f(x))
            }),
        };
        // The last entry is the (I2) residual, not a component of psi.
        comps.push(Arc::new(move |x: &Vector| lie(x) - a_i(h_star(x))));
    }

    let lie_chain = lie_derivative_chain(flow.clone(), spec.h_star.clone(), None, m as i64 - 1)?;
    let i1_items: Vec<(f64, &Vector)> = d_samples
        .iter()
        .map(|x| {
            let gx = sys.jump(x);
            let worst = lie_chain
                .iter()
                .map(|l| (l(x) - l(&gx)).abs())
                .fold(0.0, f64::max);
            (worst, x)
        })
        .collect();
    let i1 = crate::report::CheckReport::max_residual("I1_lie_matching", tol, i1_items);
    if !i1.pass {
        return Err(Error::I1Violated {
            residual: i1.worst_residual,
            point: i1.worst_point.unwrap_or_default(),
        });
    }
    let residual_fn = comps[m].clone();
    let i2 = crate::report::CheckReport::max_residual(
        "I2_canonical_form",
        tol,
        c_samples.iter().map(|x| (residual_fn(x).abs(), x)),
    );
    if !i2.pass {
        return Err(Error::I2Violated {
            residual: i2.worst_residual,
            point: i2.worst_point.unwrap_or_default(),
        });
    }

    let psi_comps: Vec<ScalarFn> = comps[..m].to_vec();
    let psi = move |x: &Vector| Vector::from_iterator(psi_comps.len(), psi_comps.iter().map(|c| c(x)));
    let mut gm = GluingMap {
        m,
        psi: Arc::new(psi),
        d_psi: None,
        psi_inv: spec.psi_inv.clone(),
        glued_domain: spec.glued_domain.clone(),
    };
    if let Some(grads) = spec.gradients.as_ref().filter(|g| g.len() >= m) {
        let grads: Vec<VecFn> = grads[..m].to_vec();
        gm.d_psi = Some(Arc::new(move |x: &Vector| {
            let rows: Vec<_> = grads.iter().map(|g| g(x).transpose()).collect();
            Matrix::from_rows(&rows)
        }));
    }
    Ok((gm, ImmersionReport { i1, i2 }))
}

/// `zeta_hat' = A zeta_hat + L (C zeta_hat - phi(y)) + a(phi(y)) [+ b_inj y]`
/// with `A` the shift matrix and `C = e_1^T`.
#[derive(Clone)]
pub struct OutputInjectionObserver {
    pub a: Matrix,
    pub c_row: Matrix,
    pub gain: Vector,
    /// `a(y*)` as a vector of the `m` injection terms.
    pub injection: Arc<dyn Fn(f64) -> Vector + Send + Sync>,
    pub phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub b_inj: Option<Vector>,
}

impl std::fmt::Debug for OutputInjectionObserver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OutputInjectionObserver")
            .field("gain", &self.gain.as_slice())
            .field("b_inj", &self.b_inj)
            .finish_non_exhaustive()
    }
}

/// Required Hurwitz margin of `A + L C`.
pub const HURWITZ_MARGIN: f64 = 0.1;

impl OutputInjectionObserver {
    pub fn new(
        gain: Vector,
        phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        injection: Arc<dyn Fn(f64) -> Vector + Send + Sync>,
    ) -> Self {
        let m = gain.len();
        let mut c_row = Matrix::zeros(1, m);
        c_row[(0, 0)] = 1.0;
        Self {
            a: linalg::shift_matrix(m),
            c_row,
            gain,
            injection,
            phi,
            b_inj: None,
        }
    }

    /// Gain placing `eig(A + L C)` at `poles`.
    pub fn with_poles(
        poles: &[f64],
        phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        injection: Arc<dyn Fn(f64) -> Vector + Send + Sync>,
    ) -> Self {
        Self::new(linalg::shift_observer_gain(poles), phi, injection)
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn error_matrix(&self) -> Matrix {
        &self.a + &self.gain * &self.c_row
    }

    /// Largest real part of `eig(A + L C)`; `NotHurwitz` unless it is at most `-0.1`.
    pub fn check_hurwitz(&self) -> Result<f64> {
        let max_real = linalg::max_real_eigenvalue(&self.error_matrix());
        if max_real > -HURWITZ_MARGIN {
            return Err(Error::NotHurwitz { max_real });
        }
        Ok(max_real)
    }

    pub fn field(&self, zeta_hat: &Vector, y: f64) -> Vector {
        let y_star = (self.phi)(y);
        let innovation = (&self.c_row * zeta_hat)[0] - y_star;
        let mut d = &self.a * zeta_hat + &self.gain * innovation + (self.injection)(y_star);
        if let Some(b) = &self.b_inj {
            d += b * y;
        }
        d
    }
}

/// A measured signal with a known sampling resolution.
pub trait OutputSignal: InputSignal {
    /// Largest gap between the underlying samples.
    fn sample_spacing(&self) -> f64;
}

/// `y(t) = h(x(t))` along a simulated execution, using its dense output.
/// Jump instants are reported as breakpoints.
#[derive(Clone)]
pub struct ExecutionOutput<'a> {
    pub exec: &'a HybridExecution,
    pub h: VecFn,
    pub q: usize,
}

impl<'a> ExecutionOutput<'a> {
    pub fn new(exec: &'a HybridExecution, h: VecFn, q: usize) -> Self {
        Self { exec, h, q }
    }

    pub fn at(&self, t: f64) -> Vector {
        (self.h)(&self.exec.state_in_piece(t, t))
    }
}

impl InputSignal for ExecutionOutput<'_> {
    fn dim(&self) -> usize {
        self.q
    }

    fn value(&self, t: f64, _x: &Vector, piece: f64) -> Vector {
        (self.h)(&self.exec.state_in_piece(t, piece))
    }

    fn next_breakpoint(&self, t: f64) -> Option<f64> {
        self.exec.jumps.iter().map(|j| j.time).find(|&tau| tau > t)
    }
}

impl OutputSignal for ExecutionOutput<'_> {
    fn sample_spacing(&self) -> f64 {
        self.exec
            .arcs
            .iter()
            .flat_map(|arc| arc.samples.windows(2).map(|w| w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

fn check_spacing(y: &dyn OutputSignal, step: f64) -> Result<()> {
    let spacing = y.sample_spacing();
    if spacing > step * (1.0 + 1e-9) {
        return Err(Error::SignalTooSparse { spacing, step });
    }
    Ok(())
}

/// Integrates the output-injection observer driven by `y` (scalar output).
pub fn run_output_injection_observer(
    obs: &OutputInjectionObserver,
    y: &dyn OutputSignal,
    zeta_hat0: &Vector,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    check_spacing(y, step)?;
    integrate(
        |_, z, yv| obs.field(z, yv[0]),
        y,
        zeta_hat0,
        t_end,
        step,
        |_, _| Ok::<(), Error>(()),
    )
}

/// Settings of the continuous-discrete extended Kalman filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig {
    /// Process noise intensity, `q I`.
    pub q: f64,
    /// Measurement noise variance, `r I`.
    pub r: f64,
    /// Initial covariance, `p0 I`.
    pub p0: f64,
    /// A measurement update every `stride` integration steps.
    pub stride: usize,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            q: 1e-6,
            r: 1e-4,
            p0: 1.0,
            stride: 1,
        }
    }
}

pub const COVARIANCE_LIMIT: f64 = 1e6;

/// Continuous-discrete EKF on `zeta' = f_psi(zeta)`, `y = h_psi(zeta)`, with
/// finite-difference linearizations. The returned trajectory holds the
/// posterior estimate at each grid time.
pub fn run_ekf_observer(
    gs: &GluedSystem,
    y: &dyn OutputSignal,
    zeta_hat0: &Vector,
    cfg: &EkfConfig,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    let h = gs.h_psi.clone().ok_or(Error::NoOutputMap)?;
    if !(cfg.r > 0.0) || cfg.q < 0.0 || cfg.p0 < 0.0 || cfg.stride == 0 {
        return Err(Error::InvalidParameter("EKF needs q >= 0, r > 0, p0 >= 0, stride >= 1".into()));
    }
    check_spacing(y, step)?;
    let m = gs.m;
    let u0 = gs.zero_input();
    let f = |z: &Vector| gs.field(z, &u0);
    let q_mat = Matrix::identity(m, m) * cfg.q;
    let r_mat = Matrix::identity(gs.q, gs.q) * cfg.r;

    // State and covariance integrated jointly, `P` stored column-major after `zeta`.
    let joint = |_: f64, s: &Vector| {
        let z = s.rows(0, m).into_owned();
        let p = Matrix::from_column_slice(m, m, &s.as_slice()[m..]);
        let fj = linalg::jacobian_central(f, &z, 1e-6);
        let dp = &fj * &p + &p * fj.transpose() + &q_mat;
        let mut out = Vector::zeros(m + m * m);
        out.rows_mut(0, m).copy_from(&f(&z));
        out.rows_mut(m, m * m).copy_from_slice(dp.as_slice());
        out
    };

    let mut z = zeta_hat0.clone();
    let mut p = Matrix::identity(m, m) * cfg.p0;
    let mut t = 0.0;
    let mut k = 0usize;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![z.clone()],
    };
    while t < t_end {
        let t_next = next_grid_time(t, step).min(t_end);
        let mut s = Vector::zeros(m + m * m);
        s.rows_mut(0, m).copy_from(&z);
        s.rows_mut(m, m * m).copy_from_slice(p.as_slice());
        let s_next = rk4_step(joint, t, &s, t_next - t);
        z = s_next.rows(0, m).into_owned();
        p = Matrix::from_column_slice(m, m, &s_next.as_slice()[m..]);
        p = (&p + p.transpose()) * 0.5;
        k += 1;
        if k % cfg.stride == 0 {
            let y_meas = y.value(t_next, &z, t_next);
            let hj = linalg::jacobian_central(|v| h(v), &z, 1e-6);
            let s_cov = &hj * &p * hj.transpose() + &r_mat;
            let s_inv = s_cov
                .try_inverse()
                .ok_or(Error::CovarianceDivergence { t: t_next, trace: f64::INFINITY })?;
            let gain = &p * hj.transpose() * s_inv;
            z += &gain * (y_meas - h(&z));
            p = (Matrix::identity(m, m) - &gain * &hj) * &p;
            p = (&p + p.transpose()) * 0.5;
        }
        let trace = p.trace();
        if !(trace <= COVARIANCE_LIMIT) {
            return Err(Error::CovarianceDivergence { t: t_next, trace });
        }
        t = t_next;
        traj.times.push(t);
        traj.states.push(z.clone());
    }
    Ok(traj)
}

/// Projected glued estimates and the reconstructed plant estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub zeta_bar: Vec<Vector>,
    pub x_hat: Vec<Vector>,
}

/// `zeta_bar = Pi(zeta_hat)` onto `psi(E)` and `x_hat = psi^{-1}(zeta_bar)`.
pub fn reconstruct_estimate(gs: &GluedSystem, raw: &[Vector]) -> Result<Reconstruction> {
    let pairs: Vec<Result<(Vector, Vector)>> = raw
        .par_iter()
        .map(|zh| {
            let proj = project_to_invariant(gs, zh)?;
            let x_hat = (gs.gluing.psi_inv)(&proj.zeta);
            Ok((proj.zeta, x_hat))
        })
        .collect();
    let mut zeta_bar = Vec::with_capacity(raw.len());
    let mut x_hat = Vec::with_capacity(raw.len());
    for r in pairs {
        let (z, x) = r?;
        zeta_bar.push(z);
        x_hat.push(x);
    }
    Ok(Reconstruction { zeta_bar, x_hat })
}

/// Time-aligned record of an observer run.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRun {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub zeta: Vec<Vector>,
    pub zeta_hat: Vec<Vector>,
    pub zeta_bar: Vec<Vector>,
    pub x_hat: Vec<Vector>,
    pub e_glued: Vec<f64>,
}

impl ObserverRun {
    /// Aligns the raw observer trajectory with the plant execution and its
    /// reconstruction.
    pub fn assemble(
        exec: &HybridExecution,
        gm: &GluingMap,
        raw: &Trajectory,
        recon: Reconstruction,
    ) -> Self {
        let x: Vec<Vector> = raw.times.iter().map(|&t| exec.state_dense_clamped(t)).collect();
        let zeta: Vec<Vector> = x.iter().map(|xi| gm.apply(xi)).collect();
        let e_glued = zeta
            .iter()
            .zip(&raw.states)
            .map(|(z, zh)| (z - zh).norm())
            .collect();
        Self {
            times: raw.times.clone(),
            x,
            zeta,
            zeta_hat: raw.states.clone(),
            zeta_bar: recon.zeta_bar,
            x_hat: recon.x_hat,
            e_glued,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.x_hat)
            .map(|(a, b)| (a - b).norm())
            .collect()
    }
}

/// Outcome of the windowed convergence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub epsilon: f64,
    pub alpha: f64,
    /// Settling time `T`; `None` when the error is still at least `epsilon`
    /// at the last admissible grid time.
    #[serde(rename = "T")]
    pub settling_time: Option<f64>,
    pub max_err_on_windows: f64,
    pub excluded_measure: f64,
    pub pass: bool,
}

/// Measure of `[0, horizon]` covered by the balls of radius `alpha` around `centers`.
pub fn excluded_measure(centers: &[f64], alpha: f64, horizon: f64) -> f64 {
    let mut iv: Vec<(f64, f64)> = centers
        .iter()
        .map(|&c| ((c - alpha).max(0.0), (c + alpha).min(horizon)))
        .filter(|(a, b)| b > a)
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

/// `t` lies in an open ball of radius `alpha` around one of `centers`.
pub fn in_jump_window(t: f64, centers: &[f64], alpha: f64) -> bool {
    centers.iter().any(|&c| (t - c).abs() < alpha)
}

/// Finds the least grid time `T` after which `|x - x_hat| < epsilon` on every
/// grid time outside the jump windows. The windows are centred at `0` and at
/// every jump time.
pub fn estimation_error_report(
    times: &[f64],
    errors: &[f64],
    jump_times: &[f64],
    alpha: f64,
    epsilon: f64,
) -> ErrorReport {
    let horizon = times.last().copied().unwrap_or(0.0);
    let mut centers = vec![0.0];
    centers.extend(jump_times.iter().copied().filter(|&t| t > 0.0));
    let admissible: Vec<usize> = (0..times.len())
        .filter(|&i| !in_jump_window(times[i], &centers, alpha))
        .collect();
    let excluded = excluded_measure(&centers, alpha, horizon);

    let violation = admissible
        .iter()
        .rev()
        .find(|&&i| !(errors[i] < epsilon))
        .copied();
    let (settling_time, after): (Option<f64>, Vec<usize>) = match violation {
        None => (Some(0.0), admissible.clone()),
        Some(i) if Some(&i) == admissible.last() => (None, admissible.clone()),
        Some(i) => (
            Some(times[i]),
            admissible.iter().copied().filter(|&j| times[j] > times[i]).collect(),
        ),
    };
    let max_err = after.iter().map(|&i| errors[i]).fold(0.0, f64::max);
    ErrorReport {
        epsilon,
        alpha,
        settling_time,
        max_err_on_windows: max_err,
        excluded_measure: excluded,
        pass: settling_time.is_some() && max_err < epsilon && !after.is_empty(),
    }
}

/// Graphical closeness of two sampled signals on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub epsilon: f64,
    pub window: f64,
    /// Least grid time after which both directions hold.
    pub t_star: Option<f64>,
    pub pass: bool,
    /// Latest grid time where a direction fails, with its best gap.
    pub worst_t: Option<f64>,
    pub worst_gap: f64,
}

fn best_match(times: &[f64], a: &[Vector], b: &[Vector], i: usize, window: f64) -> f64 {
    let t = times[i];
    let lo = times.partition_point(|&s| s < t - window);
    let hi = times.partition_point(|&s| s <= t + window);
    let mut best = f64::INFINITY;
    for j in lo..hi {
        let dt = times[j] - t;
        let gap2 = dt * dt + (&a[i] - &b[j]).norm_squared();
        best = best.min(gap2);
    }
    best.sqrt()
}

/// For every grid `t > T*` there is `s` within `window` of `t` with
/// `|(t, x(t)) - (s, x_hat(s))| < epsilon`, and the same with roles swapped.
pub fn graphical_closeness(
    times: &[f64],
    x: &[Vector],
    x_hat: &[Vector],
    epsilon: f64,
    window: f64,
) -> ClosenessReport {
    // Matches farther than epsilon in time cannot help.
    let w = window.min(epsilon);
    let gaps: Vec<f64> = (0..times.len())
        .into_par_iter()
        .map(|i| best_match(times, x, x_hat, i, w).max(best_match(times, x_hat, x, i, w)))
        .collect();
    let last_fail = (0..times.len()).rev().find(|&i| !(gaps[i] < epsilon));
    let (t_star, pass, worst_t, worst_gap) = match last_fail {
        None => (Some(times.first().copied().unwrap_or(0.0)), true, None, 0.0),
        Some(i) if i + 1 == times.len() => (None, false, Some(times[i]), gaps[i]),
        Some(i) => (Some(times[i]), true, Some(times[i]), gaps[i]),
    };
    ClosenessReport {
        epsilon,
        window,
        t_star,
        pass,
        worst_t,
        worst_gap,
    }
}
