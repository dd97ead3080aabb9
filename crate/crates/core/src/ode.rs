//! Fixed-step classical Runge-Kutta integration and piecewise-continuous inputs.

use std::sync::Arc;

use crate::Vector;

/// A piecewise-continuous input signal `u(t, x)`.
///
/// Discontinuities in time are announced through [`InputSignal::next_breakpoint`];
/// the integrators never step across one. Within a step the continuous piece is
/// selected by `piece`, a time strictly inside the step, so stage evaluations at
/// the step end use the left limit rather than the next piece.
pub trait InputSignal: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, t: f64, x: &Vector, piece: f64) -> Vector;

    /// First discontinuity strictly after `t`.
    fn next_breakpoint(&self, _t: f64) -> Option<f64> {
        None
    }
}

/// The empty or zero input.
#[derive(Debug, Clone, Copy)]
pub struct ZeroInput(pub usize);

impl InputSignal for ZeroInput {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, _t: f64, _x: &Vector, _piece: f64) -> Vector {
        Vector::zeros(self.0)
    }
}

/// Input given by a closure that is continuous in time.
#[derive(Clone)]
pub struct FnInput {
    dim: usize,
    f: Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>,
}

impl FnInput {
    pub fn new(dim: usize, f: impl Fn(f64, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }
}

impl InputSignal for FnInput {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: f64, x: &Vector, _piece: f64) -> Vector {
        (self.f)(t, x)
    }
}

/// Scalar periodic two-level signal: `first` while `t mod period` lies in
/// `[0, switch_phase)`, `second` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicSwitch {
    pub period: f64,
    pub switch_phase: f64,
    pub first: f64,
    pub second: f64,
}

impl PeriodicSwitch {
    /// Right-continuous value at `t`.
    pub fn at(&self, t: f64) -> f64 {
        let phase = t.rem_euclid(self.period);
        if phase < self.switch_phase {
            self.first
        } else {
            self.second
        }
    }

    pub fn next_switch(&self, t: f64) -> f64 {
        let k = (t / self.period).floor();
        let candidates = [
            k * self.period + self.switch_phase,
            (k + 1.0) * self.period,
            (k + 1.0) * self.period + self.switch_phase,
        ];
        candidates
            .into_iter()
            .find(|&c| c > t)
            .expect("one candidate lies after t")
    }
}

impl InputSignal for PeriodicSwitch {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, _t: f64, _x: &Vector, piece: f64) -> Vector {
        Vector::from_element(1, self.at(piece))
    }

    fn next_breakpoint(&self, t: f64) -> Option<f64> {
        Some(self.next_switch(t))
    }
}

/// One classical RK4 step of `x' = f(t, x)` from `t` with step `h`.
pub fn rk4_step(f: impl Fn(f64, &Vector) -> Vector, t: f64, x: &Vector, h: f64) -> Vector {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Next grid time `k * step` strictly after `t`.
pub(crate) fn next_grid_time(t: f64, step: f64) -> f64 {
    let mut k = (t / step).floor() + 1.0;
    // Grid points within rounding distance of `t` count as reached.
    while k * step - t <= 1e-9 * step {
        k += 1.0;
    }
    k * step
}

/// Sampled continuous trajectory on a time grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Linear interpolation, clamped to the sampled range.
    pub fn at(&self, t: f64) -> Vector {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            return self.states[0].clone();
        }
        if idx >= self.times.len() {
            return self.states[self.times.len() - 1].clone();
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        if t1 <= t0 {
            return self.states[idx].clone();
        }
        let w = (t - t0) / (t1 - t0);
        &self.states[idx - 1] * (1.0 - w) + &self.states[idx] * w
    }
}

/// Integrates `x' = field(t, x, u)` with RK4 on the grid `k * step`, stopping at
/// every input breakpoint. `on_sample` may reject a state (returning an error).
pub fn integrate<E>(
    field: impl Fn(f64, &Vector, &Vector) -> Vector,
    input: &dyn InputSignal,
    x0: &Vector,
    t_end: f64,
    step: f64,
    mut on_sample: impl FnMut(f64, &Vector) -> std::result::Result<(), E>,
) -> std::result::Result<Trajectory, E> {
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
    };
    on_sample(0.0, x0)?;
    let mut t = 0.0;
    let mut x = x0.clone();
    while t < t_end {
        let mut t_next = next_grid_time(t, step).min(t_end);
        if let Some(bp) = input.next_breakpoint(t) {
            if bp < t_next {
                t_next = bp;
            }
        }
        let piece = 0.5 * (t + t_next);
        let x_new = rk4_step(
            |s, z| field(s, z, &input.value(s, z, piece)),
            t,
            &x,
            t_next - t,
        );
        on_sample(t_next, &x_new)?;
        traj.times.push(t_next);
        traj.states.push(x_new.clone());
        t = t_next;
        x = x_new;
    }
    Ok(traj)
}
