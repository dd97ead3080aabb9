//! Hybrid systems `(C, f, D, g[, h])` and their executions.
//!
//! Flow and jump sets are described by membership predicates plus guard level
//! functions: `C` lies in `{r_D <= 0, r_G >= 0}`, `D` is where `r_D = 0` and the
//! jump-set predicate holds, and `G = g(D)` is where `r_G = 0`. When `C` is a
//! lower-dimensional submanifold (`k < n`) it is the zero set of `r_C`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::{next_grid_time, rk4_step, InputSignal};
use crate::report::CheckReport;
use crate::{FlowFn, MatFn, Matrix, Predicate, ScalarFn, VecFn, Vector};

/// Input-affine decomposition `f(x, u) = a(x) + b(x) u`.
#[derive(Clone)]
pub struct InputAffine {
    pub drift: VecFn,
    pub input_matrix: MatFn,
}

#[derive(Clone)]
pub struct HybridSystemDef {
    pub id: String,
    /// Ambient state dimension.
    pub n: usize,
    /// Manifold dimension of the flow set.
    pub k: usize,
    /// Input dimension.
    pub p: usize,
    /// Output dimension (0 without an output map).
    pub q: usize,
    pub flow_map: FlowFn,
    pub jump_map: VecFn,
    pub output_map: Option<VecFn>,
    pub r_c: Option<VecFn>,
    pub r_c_jacobian: Option<MatFn>,
    pub r_d: ScalarFn,
    pub r_d_gradient: Option<VecFn>,
    pub r_g: ScalarFn,
    pub r_g_gradient: Option<VecFn>,
    pub in_flow_set: Predicate,
    pub in_jump_set: Predicate,
    pub affine: Option<InputAffine>,
}

impl std::fmt::Debug for HybridSystemDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridSystemDef")
            .field("id", &self.id)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("p", &self.p)
            .field("q", &self.q)
            .finish_non_exhaustive()
    }
}

/// Which boundary piece a check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// The jump set `D`, level set of `r_D`.
    Jump,
    /// The jump image `G = g(D)`, level set of `r_G`.
    Landing,
}

const GUARD_FD_STEP: f64 = 1e-7;

impl HybridSystemDef {
    /// A full-dimensional (`k = n`) autonomous system without output.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        n: usize,
        flow_map: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        jump_map: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        r_d: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        r_g: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        in_flow_set: impl Fn(&Vector) -> bool + Send + Sync + 'static,
        in_jump_set: impl Fn(&Vector) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            n,
            k: n,
            p: 0,
            q: 0,
            flow_map: Arc::new(flow_map),
            jump_map: Arc::new(jump_map),
            output_map: None,
            r_c: None,
            r_c_jacobian: None,
            r_d: Arc::new(r_d),
            r_d_gradient: None,
            r_g: Arc::new(r_g),
            r_g_gradient: None,
            in_flow_set: Arc::new(in_flow_set),
            in_jump_set: Arc::new(in_jump_set),
            affine: None,
        }
    }

    pub fn with_output(
        mut self,
        q: usize,
        h: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.q = q;
        self.output_map = Some(Arc::new(h));
        self
    }

    pub fn with_input_dim(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    /// Declares `C` a `k`-dimensional submanifold, the zero set of `r_c`.
    pub fn with_manifold(
        mut self,
        k: usize,
        r_c: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jacobian: Option<MatFn>,
    ) -> Self {
        self.k = k;
        self.r_c = Some(Arc::new(r_c));
        self.r_c_jacobian = jacobian;
        self
    }

    pub fn with_guard_gradients(mut self, r_d_gradient: VecFn, r_g_gradient: VecFn) -> Self {
        self.r_d_gradient = Some(r_d_gradient);
        self.r_g_gradient = Some(r_g_gradient);
        self
    }

    pub fn with_input_affine(mut self, drift: VecFn, input_matrix: MatFn) -> Self {
        self.affine = Some(InputAffine {
            drift,
            input_matrix,
        });
        self
    }

    pub fn flow(&self, x: &Vector, u: &Vector) -> Vector {
        (self.flow_map)(x, u)
    }

    pub fn jump(&self, x: &Vector) -> Vector {
        (self.jump_map)(x)
    }

    pub fn output(&self, x: &Vector) -> Option<Vector> {
        self.output_map.as_ref().map(|h| h(x))
    }

    pub fn zero_input(&self) -> Vector {
        Vector::zeros(self.p)
    }

    pub fn guard(&self, boundary: Boundary, x: &Vector) -> f64 {
        match boundary {
            Boundary::Jump => (self.r_d)(x),
            Boundary::Landing => (self.r_g)(x),
        }
    }

    pub fn guard_gradient(&self, boundary: Boundary, x: &Vector) -> Vector {
        let (analytic, level) = match boundary {
            Boundary::Jump => (&self.r_d_gradient, &self.r_d),
            Boundary::Landing => (&self.r_g_gradient, &self.r_g),
        };
        match analytic {
            Some(grad) => grad(x),
            None => linalg::gradient_central(|z| level(z), x, GUARD_FD_STEP),
        }
    }

    pub fn r_c_jacobian_at(&self, x: &Vector) -> Option<Matrix> {
        let r_c = self.r_c.as_ref()?;
        Some(match &self.r_c_jacobian {
            Some(jac) => jac(x),
            None => linalg::jacobian_central(|z| r_c(z), x, GUARD_FD_STEP),
        })
    }

    /// `x` is in the jump set: the predicate holds and the guard vanishes.
    pub fn is_jump_point(&self, x: &Vector) -> bool {
        (self.in_jump_set)(x) && (self.r_d)(x).abs() <= 1e-9
    }

    /// Moves `x` onto the level set `r_D = 0` by Newton steps along the gradient.
    fn project_onto_jump_guard(&self, x: &Vector) -> Vector {
        let mut z = x.clone();
        for _ in 0..6 {
            let r = (self.r_d)(&z);
            if r == 0.0 {
                break;
            }
            let g = self.guard_gradient(Boundary::Jump, &z);
            let gg = g.norm_squared();
            if gg == 0.0 {
                break;
            }
            z -= g * (r / gg);
            if (self.r_d)(&z).abs() <= 1e-15 {
                break;
            }
        }
        z
    }
}

/// Ordered hybrid time intervals `[tau_i, tau_i']` with `tau_i' = tau_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTimeTrajectory {
    pub intervals: Vec<(f64, f64)>,
}

impl HybridTimeTrajectory {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let traj = Self { intervals };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.intervals.first() else {
            return Err(Error::InvalidParameter("empty hybrid time trajectory".into()));
        };
        if first.0 != 0.0 {
            return Err(Error::InvalidParameter("tau_0 must be 0".into()));
        }
        for (i, &(a, b)) in self.intervals.iter().enumerate() {
            if a > b {
                return Err(Error::InvalidParameter(format!("interval {i} is reversed")));
            }
            if let Some(&(next, _)) = self.intervals.get(i + 1) {
                if next != b {
                    return Err(Error::InvalidParameter(format!(
                        "interval {i} does not end where interval {} starts",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Index `N` of the last interval.
    pub fn last_index(&self) -> usize {
        self.intervals.len() - 1
    }

    /// `|tau|`, the sum of interval lengths.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    /// Jump instants `tau_1, .., tau_N`.
    pub fn jump_times(&self) -> Vec<f64> {
        self.intervals.iter().skip(1).map(|&(a, _)| a).collect()
    }

    /// Interval `i(t)` with `t` in `[tau_i, tau_i')`; the last interval is closed.
    pub fn interval_at(&self, t: f64) -> usize {
        let idx = self.intervals.partition_point(|&(a, _)| a <= t);
        idx.saturating_sub(1)
    }
}

/// One stored point of a flowing arc with the one-sided state derivatives used
/// by the cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vector,
    /// Derivative of the step ending here.
    pub dx_in: Vector,
    /// Derivative of the step starting here.
    pub dx_out: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowArc {
    pub samples: Vec<Sample>,
}

impl FlowArc {
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = &self.samples;
        if s.len() == 1 || t <= s[0].t {
            return (0, 0.0);
        }
        let idx = s.partition_point(|p| p.t <= t).clamp(1, s.len() - 1);
        let (t0, t1) = (s[idx - 1].t, s[idx].t);
        let w = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
        (idx - 1, w)
    }

    pub fn linear(&self, t: f64) -> Vector {
        let (i, w) = self.locate(t);
        if self.samples.len() == 1 {
            return self.samples[0].x.clone();
        }
        &self.samples[i].x * (1.0 - w) + &self.samples[i + 1].x * w
    }

    pub fn hermite(&self, t: f64) -> Vector {
        if self.samples.len() == 1 {
            return self.samples[0].x.clone();
        }
        let (i, w) = self.locate(t);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let h = b.t - a.t;
        let w2 = w * w;
        let w3 = w2 * w;
        let h00 = 2.0 * w3 - 3.0 * w2 + 1.0;
        let h10 = w3 - 2.0 * w2 + w;
        let h01 = -2.0 * w3 + 3.0 * w2;
        let h11 = w3 - w2;
        &a.x * h00 + &a.dx_out * (h10 * h) + &b.x * h01 + &b.dx_in * (h11 * h)
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }
}

/// A recorded jump `x(tau_i'^-) -> x(tau_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridExecution {
    pub time_traj: HybridTimeTrajectory,
    pub arcs: Vec<FlowArc>,
    pub jumps: Vec<JumpRecord>,
}

impl HybridExecution {
    pub fn horizon(&self) -> f64 {
        self.time_traj.length()
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    pub fn initial_state(&self) -> &Vector {
        &self.arcs[0].samples[0].x
    }

    pub fn final_state(&self) -> &Vector {
        let arc = self.arcs.last().expect("at least one arc");
        &arc.samples[arc.samples.len() - 1].x
    }

    fn check_horizon(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(0.0..horizon).contains(&t) {
            return Err(Error::OutOfHorizon { t, horizon });
        }
        Ok(())
    }

    /// Right-continuous state `x(t)`, linear between stored samples.
    pub fn state_at(&self, t: f64) -> Result<Vector> {
        self.check_horizon(t)?;
        Ok(self.arcs[self.time_traj.interval_at(t)].linear(t))
    }

    /// Right-continuous state `x(t)` from the cubic Hermite dense output.
    pub fn state_at_dense(&self, t: f64) -> Result<Vector> {
        self.check_horizon(t)?;
        Ok(self.arcs[self.time_traj.interval_at(t)].hermite(t))
    }

    /// Dense right-continuous state, with the final state at and after `|tau|`.
    pub fn state_dense_clamped(&self, t: f64) -> Vector {
        if t >= self.horizon() {
            return self.final_state().clone();
        }
        let t = t.max(0.0);
        self.arcs[self.time_traj.interval_at(t)].hermite(t)
    }

    /// Dense state on the interval containing `piece`, evaluated at `t`.
    ///
    /// With `t` at a jump instant and `piece` just before it this returns the
    /// pre-jump state, i.e. the left limit.
    pub fn state_in_piece(&self, t: f64, piece: f64) -> Vector {
        let i = self
            .time_traj
            .interval_at(piece.clamp(0.0, self.horizon()));
        self.arcs[i].hermite(t)
    }

    /// Every stored sample in time order with its interval index.
    pub fn samples(&self) -> impl Iterator<Item = (usize, &Sample)> {
        self.arcs
            .iter()
            .enumerate()
            .flat_map(|(i, arc)| arc.samples.iter().map(move |s| (i, s)))
    }

    /// Sample times and states restricted to `t < |tau|`, right-continuous at jumps.
    pub fn flow_samples(&self) -> Vec<(f64, Vector)> {
        let mut out: Vec<(f64, Vector)> = Vec::new();
        for arc in &self.arcs {
            for s in &arc.samples {
                if let Some(last) = out.last_mut() {
                    if last.0 == s.t {
                        last.1 = s.x.clone();
                        continue;
                    }
                }
                out.push((s.t, s.x.clone()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub step: f64,
    pub event_tol: f64,
    pub max_jumps: usize,
    pub t_end: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            step: 1e-3,
            event_tol: 1e-10,
            max_jumps: 10_000,
            t_end: 10.0,
        }
    }
}

impl SimParams {
    pub fn with_horizon(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidParameter("step must be positive".into()));
        }
        if !(self.event_tol < self.step) || self.event_tol <= 0.0 {
            return Err(Error::InvalidParameter(
                "event_tol must be positive and below step".into(),
            ));
        }
        if self.max_jumps < 1 {
            return Err(Error::InvalidParameter("max_jumps must be at least 1".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter("t_end must be positive".into()));
        }
        Ok(())
    }
}

/// Minimum transversality margin accepted at a localized event.
pub const TRANSVERSALITY_MARGIN: f64 = 1e-8;

/// Simulates an execution of `sys` from `x0` under `input` up to `params.t_end`.
///
/// Steps follow the grid `k * step` and stop at input breakpoints. A step whose
/// end has `r_D > 0` is bisected down to `event_tol`; the bracketed point is
/// moved onto `r_D = 0` and, if it belongs to `D`, the jump map is applied once.
pub fn simulate_hybrid(
    sys: &HybridSystemDef,
    x0: &Vector,
    input: &dyn InputSignal,
    params: &SimParams,
) -> Result<HybridExecution> {
    params.validate()?;
    if x0.len() != sys.n {
        return Err(Error::InvalidParameter(format!(
            "initial state has dimension {}, expected {}",
            x0.len(),
            sys.n
        )));
    }
    let field = |t: f64, x: &Vector, piece: f64| sys.flow(x, &input.value(t, x, piece));

    let mut arcs: Vec<FlowArc> = Vec::new();
    let mut jumps: Vec<JumpRecord> = Vec::new();
    let mut intervals: Vec<(f64, f64)> = Vec::new();

    let mut t = 0.0;
    let mut x = x0.clone();
    let mut interval_start = 0.0;

    if sys.is_jump_point(&x) {
        let d = field(0.0, &x, 0.0);
        arcs.push(FlowArc {
            samples: vec![Sample {
                t: 0.0,
                x: x.clone(),
                dx_in: d.clone(),
                dx_out: d,
            }],
        });
        intervals.push((0.0, 0.0));
        let post = sys.jump(&x);
        jumps.push(JumpRecord {
            time: 0.0,
            pre: x.iter().copied().collect(),
            post: post.iter().copied().collect(),
        });
        x = post;
    } else if !(sys.in_flow_set)(&x) {
        return Err(Error::EscapedFlowSet {
            t: 0.0,
            state: x.iter().copied().collect(),
        });
    }

    let first_piece = next_piece_time(t, params, input);
    let d0 = field(t, &x, first_piece);
    let mut current = vec![Sample {
        t,
        x: x.clone(),
        dx_in: d0.clone(),
        dx_out: d0,
    }];

    while t < params.t_end {
        let mut t_next = next_grid_time(t, params.step).min(params.t_end);
        if let Some(bp) = input.next_breakpoint(t) {
            if bp < t_next {
                t_next = bp;
            }
        }
        let piece = 0.5 * (t + t_next);
        let step_from = |s: f64| rk4_step(|tt, z| field(tt, z, piece), t, &x, s - t);
        if let Some(last) = current.last_mut() {
            last.dx_out = field(t, &x, piece);
        }
        let x_new = step_from(t_next);

        if (sys.r_d)(&x_new) > 0.0 {
            // Bracket the crossing of r_D = 0 inside (t, t_next].
            let (mut lo, mut hi) = (t, t_next);
            let mut x_lo = x.clone();
            if (sys.r_d)(&x) <= 0.0 {
                while hi - lo > params.event_tol {
                    let mid = 0.5 * (lo + hi);
                    let x_mid = step_from(mid);
                    if (sys.r_d)(&x_mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        x_lo = x_mid;
                    }
                }
            }
            let x_event = sys.project_onto_jump_guard(&x_lo);
            let tau = lo;
            let d_event = field(tau, &x_event, piece);
            let margin = sys.guard_gradient(Boundary::Jump, &x_event).dot(&d_event);
            if !(margin > TRANSVERSALITY_MARGIN) {
                return Err(Error::NonTransversalEvent { t: tau, margin });
            }
            if !(sys.in_jump_set)(&x_event) {
                return Err(Error::EscapedFlowSet {
                    t: tau,
                    state: x_event.iter().copied().collect(),
                });
            }
            if jumps.len() >= params.max_jumps {
                return Err(Error::MaxJumpsExceeded {
                    max: params.max_jumps,
                    t: tau,
                });
            }
            if tau > t {
                current.push(Sample {
                    t: tau,
                    x: x_event.clone(),
                    dx_in: d_event.clone(),
                    dx_out: d_event,
                });
            } else if let Some(last) = current.last_mut() {
                last.x = x_event.clone();
            }
            arcs.push(FlowArc {
                samples: std::mem::take(&mut current),
            });
            intervals.push((interval_start, tau));
            let post = sys.jump(&x_event);
            jumps.push(JumpRecord {
                time: tau,
                pre: x_event.iter().copied().collect(),
                post: post.iter().copied().collect(),
            });
            interval_start = tau;
            t = tau;
            x = post;
            let d = field(t, &x, next_piece_time(t, params, input));
            current.push(Sample {
                t,
                x: x.clone(),
                dx_in: d.clone(),
                dx_out: d,
            });
            continue;
        }

        if !(sys.in_flow_set)(&x_new) {
            return Err(Error::EscapedFlowSet {
                t: t_next,
                state: x_new.iter().copied().collect(),
            });
        }
        let d_in = field(t_next, &x_new, piece);
        current.push(Sample {
            t: t_next,
            x: x_new.clone(),
            dx_in: d_in.clone(),
            dx_out: d_in,
        });
        t = t_next;
        x = x_new;
    }

    arcs.push(FlowArc { samples: current });
    intervals.push((interval_start, params.t_end));
    Ok(HybridExecution {
        time_traj: HybridTimeTrajectory::new(intervals)?,
        arcs,
        jumps,
    })
}

fn next_piece_time(t: f64, params: &SimParams, input: &dyn InputSignal) -> f64 {
    let mut t_next = next_grid_time(t, params.step);
    if let Some(bp) = input.next_breakpoint(t) {
        t_next = t_next.min(bp);
    }
    0.5 * (t + t_next)
}

/// Smallest transversality margin over boundary samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub boundary: Boundary,
    pub min_margin: f64,
    /// Required lower bound: 0 for (E2), `mu` for (C2).
    pub required: f64,
    pub pass: bool,
    pub worst_point: Vec<f64>,
    pub samples: usize,
}

/// Minimum of `grad r . f(x, u)` over boundary samples (and inputs, when given).
/// Passes iff the minimum exceeds `mu` (0 when `mu` is `None`).
pub fn check_transversality(
    sys: &HybridSystemDef,
    boundary: Boundary,
    samples: &[Vector],
    inputs: Option<&[Vector]>,
    mu: Option<f64>,
) -> Result<TransversalityReport> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let zero = [sys.zero_input()];
    let inputs = inputs.filter(|u| !u.is_empty()).unwrap_or(&zero);
    let mut min_margin = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut count = 0;
    for x in samples {
        let level = sys.guard(boundary, x);
        if level.abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "sample {:?} is off the boundary (guard value {level:e})",
                x.as_slice()
            )));
        }
        let grad = sys.guard_gradient(boundary, x);
        for u in inputs {
            let margin = grad.dot(&sys.flow(x, u));
            count += 1;
            if margin < min_margin || worst_point.is_empty() {
                min_margin = margin;
                worst_point = x.iter().copied().collect();
            }
        }
    }
    let required = mu.unwrap_or(0.0);
    Ok(TransversalityReport {
        boundary,
        min_margin,
        required,
        pass: min_margin > required,
        worst_point,
        samples: count,
    })
}

/// Flow tangency `|dr_C(x) f(x, u)| <= 1e-7` on samples of `C` (only for `k < n`).
pub fn verify_flow_tangency(
    sys: &HybridSystemDef,
    samples: &[Vector],
    inputs: Option<&[Vector]>,
) -> Result<CheckReport> {
    if sys.k == sys.n || sys.r_c.is_none() {
        return Err(Error::NotApplicable(
            "flow set is full-dimensional (k = n)".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let zero = [sys.zero_input()];
    let inputs = inputs.filter(|u| !u.is_empty()).unwrap_or(&zero);
    let residuals: Vec<(f64, &Vector)> = samples
        .iter()
        .flat_map(|x| {
            let jac = sys.r_c_jacobian_at(x).expect("r_C present");
            inputs
                .iter()
                .map(move |u| ((&jac * sys.flow(x, u)).amax(), x))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(CheckReport::max_residual(
        "flow_tangency",
        1e-7,
        residuals.iter().map(|(r, x)| (*r, *x)),
    ))
}

/// Sampled checks of the standing structure of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    /// `r_C` vanishes on `C` with full row rank (only for `k < n`).
    pub manifold: Option<CheckReport>,
    pub tangency: Option<CheckReport>,
    /// `r_D` vanishes on `D`.
    pub jump_guard: CheckReport,
    /// `g(D)` lies in `C` on the level set `r_G = 0`.
    pub landing: CheckReport,
    /// No sampled jump image lies in `D` again.
    pub disjoint: CheckReport,
}

impl SystemReport {
    pub fn pass(&self) -> bool {
        self.manifold.as_ref().is_none_or(|r| r.pass)
            && self.tangency.as_ref().is_none_or(|r| r.pass)
            && self.jump_guard.pass
            && self.landing.pass
            && self.disjoint.pass
    }
}

/// Checks the structural assumptions on sampled points of `C` and `D`.
pub fn check_system(
    sys: &HybridSystemDef,
    c_samples: &[Vector],
    d_samples: &[Vector],
    inputs: Option<&[Vector]>,
) -> Result<SystemReport> {
    if c_samples.is_empty() || d_samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let (manifold, tangency) = if sys.k < sys.n {
        let r_c = sys.r_c.as_ref().ok_or_else(|| {
            Error::InvalidParameter("k < n requires r_C".into())
        })?;
        let rank_deficit: Vec<(f64, &Vector)> = c_samples
            .iter()
            .map(|x| {
                let jac = sys.r_c_jacobian_at(x).expect("r_C present");
                let sv = linalg::singular_values(&jac);
                let rank_ok = sv.len() == sys.n - sys.k
                    && sv.iter().all(|&s| s > 1e-8 * sv[0].max(f64::MIN_POSITIVE));
                let residual = r_c(x).amax();
                (if rank_ok { residual } else { f64::INFINITY }, x)
            })
            .collect();
        (
            Some(CheckReport::max_residual("manifold", 1e-9, rank_deficit)),
            Some(verify_flow_tangency(sys, c_samples, inputs)?),
        )
    } else {
        (None, None)
    };
    let jump_guard = CheckReport::max_residual(
        "jump_guard",
        1e-9,
        d_samples.iter().map(|x| ((sys.r_d)(x).abs(), x)),
    );
    let landing = CheckReport::max_residual(
        "landing",
        1e-9,
        d_samples.iter().map(|x| {
            let gx = sys.jump(x);
            let in_c = (sys.in_flow_set)(&gx);
            ((if in_c { (sys.r_g)(&gx).abs() } else { f64::INFINITY }), x)
        }),
    );
    let disjoint = CheckReport::max_residual(
        "jump_landing_disjoint",
        0.0,
        d_samples
            .iter()
            .map(|x| (if sys.is_jump_point(&sys.jump(x)) { 1.0 } else { 0.0 }, x)),
    );
    Ok(SystemReport {
        manifold,
        tangency,
        jump_guard,
        landing,
        disjoint,
    })
}
