//! Sampling estimators: bi-Lipschitz constant of `psi`, the dwell function
//! around jumps, and Lipschitz constants of the glued maps.
//!
//! Every constant is a lower bound carried with the pair that attains it.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::{GluedSystem, GluingMap};
use crate::hybrid::{HybridExecution, HybridSystemDef};
use crate::ode::rk4_step;
use crate::sampling::{sample_params, sample_point, seeded_rng};
use crate::sets::{Chart, ParamSet, Projector};
use crate::{Predicate, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzMode {
    BilipschitzPsi,
    LipschitzFPsi,
    LipschitzHPsi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub mode: LipschitzMode,
    pub constant: f64,
    pub sample_count: usize,
    pub rejected: usize,
    pub worst_pair: (Vec<f64>, Vec<f64>),
    /// `false` when the glued map has `m > k`, outside the setting where the
    /// glued system is known to be Lipschitz.
    pub within_hypothesis: bool,
}

/// Pairs with a denominator below this are discarded.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Parallel max with the lowest index winning ties, so the result does not
/// depend on the thread schedule.
fn argmax_quotient(pairs: &[(Vector, Vector)], quotient: impl Fn(&Vector, &Vector) -> Option<f64> + Sync) -> (Option<(usize, f64)>, usize) {
    let scored: Vec<Option<f64>> = pairs.par_iter().map(|(a, b)| quotient(a, b)).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut rejected = 0;
    for (i, q) in scored.into_iter().enumerate() {
        match q {
            None => rejected += 1,
            Some(q) => {
                if best.is_none_or(|(_, bq)| q > bq) {
                    best = Some((i, q));
                }
            }
        }
    }
    (best, rejected)
}

fn pair_to_vecs(a: &Vector, b: &Vector) -> (Vec<f64>, Vec<f64>) {
    (a.iter().copied().collect(), b.iter().copied().collect())
}

/// A region `M` of `C` for the bi-Lipschitz estimate: a parameterized
/// superset with a membership filter.
#[derive(Clone)]
pub struct RegionSampler {
    pub set: ParamSet,
    pub membership: Predicate,
}

impl std::fmt::Debug for RegionSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegionSampler").field("set", &self.set).finish_non_exhaustive()
    }
}

impl RegionSampler {
    pub fn new(set: ParamSet, membership: Predicate) -> Self {
        Self { set, membership }
    }

    fn draw_params(&self, rng: &mut impl Rng) -> Option<ChartPoint> {
        for _ in 0..1000 {
            let (chart, params) = sample_params(&self.set, rng);
            let x = self.set.charts[chart].eval(&params);
            if (self.membership)(&x) {
                return Some(ChartPoint { chart, params, x });
            }
        }
        None
    }

    fn draw(&self, rng: &mut impl Rng) -> Option<Vector> {
        self.draw_params(rng).map(|p| p.x)
    }

    /// Moves `p` by `step` in its chart, relative to the chart box, keeping
    /// the result only when it stays in the region.
    fn nudge(&self, p: &ChartPoint, step: &Vector) -> Option<ChartPoint> {
        let chart = &self.set.charts[p.chart];
        let mut params = p.params.clone();
        for i in 0..params.len() {
            params[i] += step[i] * (chart.upper[i] - chart.lower[i]);
        }
        chart.clamp(&mut params);
        let x = chart.eval(&params);
        (self.membership)(&x).then_some(ChartPoint {
            chart: p.chart,
            params,
            x,
        })
    }

    /// Chart coordinates of a state of the set.
    fn locate(&self, x: &Vector) -> Option<ChartPoint> {
        let proj = Projector::euclidean(self.set.clone()).project(x)?;
        Some(ChartPoint {
            chart: proj.chart,
            params: proj.params,
            x: proj.point,
        })
    }
}

#[derive(Debug, Clone)]
struct ChartPoint {
    chart: usize,
    params: Vector,
    x: Vector,
}

fn random_dir(len: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| rng.random_range(-1.0..=1.0)))
}

/// Options of the bi-Lipschitz estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilipschitzOptions {
    pub n_pairs: usize,
    pub seed: u64,
    /// Local hill-climbing from the best sampled pairs.
    pub refine: bool,
}

impl Default for BilipschitzOptions {
    fn default() -> Self {
        Self {
            n_pairs: 10_000,
            seed: 0,
            refine: true,
        }
    }
}

fn psi_quotient(gm: &GluingMap, x: &Vector, y: &Vector) -> Option<f64> {
    let den = (gm.apply(x) - gm.apply(y)).norm();
    if den < DENOMINATOR_FLOOR {
        None
    } else {
        Some((x - y).norm() / den)
    }
}

/// Draws the pairs used by [`estimate_bilipschitz`]: a third independent
/// uniform pairs, a third local pairs at scales `1e-6 ..= 1e-1` of the chart
/// box, and a third
/// extra pairs supplied by `extra` (e.g. seam pairs), falling back to uniform.
pub fn bilipschitz_pairs(
    region: &RegionSampler,
    n_pairs: usize,
    seed: u64,
    extra: Option<&(dyn Fn(&mut rand_chacha::ChaCha8Rng) -> Option<(Vector, Vector)> + Sync)>,
) -> Result<Vec<(Vector, Vector)>> {
    let mut rng = seeded_rng(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut misses = 0usize;
    while pairs.len() < n_pairs {
        let pair = match pairs.len() % 3 {
            0 => region.draw(&mut rng).zip(region.draw(&mut rng)),
            1 => region.draw_params(&mut rng).and_then(|p| {
                let scale = 10f64.powf(rng.random_range(-6.0..=-1.0));
                let step = random_dir(p.params.len(), &mut rng) * scale;
                region.nudge(&p, &step).map(|q| (p.x, q.x))
            }),
            _ => match extra {
                Some(f) => f(&mut rng),
                None => region.draw(&mut rng).zip(region.draw(&mut rng)),
            },
        };
        match pair {
            Some(p) => pairs.push(p),
            None => {
                misses += 1;
                if misses > 100 * n_pairs.max(1) {
                    return Err(Error::DegenerateSampler);
                }
            }
        }
    }
    Ok(pairs)
}

/// `L = max |x - y| / |psi(x) - psi(y)|` over pairs of the region.
pub fn estimate_bilipschitz(
    gm: &GluingMap,
    region: &RegionSampler,
    opts: BilipschitzOptions,
) -> Result<LipschitzEstimate> {
    let pairs = bilipschitz_pairs(region, opts.n_pairs, opts.seed, None)?;
    estimate_bilipschitz_on(gm, region, &pairs, opts)
}

/// [`estimate_bilipschitz`] on caller-supplied pairs.
pub fn estimate_bilipschitz_on(
    gm: &GluingMap,
    region: &RegionSampler,
    pairs: &[(Vector, Vector)],
    opts: BilipschitzOptions,
) -> Result<LipschitzEstimate> {
    let (best, rejected) = argmax_quotient(pairs, |x, y| psi_quotient(gm, x, y));
    let (idx, mut constant) = best.ok_or(Error::DegenerateSampler)?;
    let (mut wx, mut wy) = pairs[idx].clone();
    let mut count = pairs.len();

    if opts.refine {
        // Hill-climb from the best few sampled pairs, moving one point at a time.
        let mut order: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter_map(|(i, (x, y))| psi_quotient(gm, x, y).map(|q| (i, q)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let starts: Vec<(Vector, Vector)> = order.iter().take(16).map(|&(i, _)| pairs[i].clone()).collect();
        let refined: Vec<(Vector, Vector, f64, usize)> = starts
            .par_iter()
            .enumerate()
            .map(|(k, (x, y))| hill_climb(gm, region, x.clone(), y.clone(), opts.seed ^ (k as u64 + 1)))
            .collect();
        for (x, y, q, evals) in refined {
            count += evals;
            if q > constant {
                constant = q;
                wx = x;
                wy = y;
            }
        }
    }
    let (a, b) = pair_to_vecs(&wx, &wy);
    Ok(LipschitzEstimate {
        mode: LipschitzMode::BilipschitzPsi,
        constant,
        sample_count: count,
        rejected,
        worst_pair: (a, b),
        within_hypothesis: true,
    })
}

/// Climbs the quotient by moving one point at a time in chart coordinates.
fn hill_climb(gm: &GluingMap, region: &RegionSampler, x: Vector, y: Vector, seed: u64) -> (Vector, Vector, f64, usize) {
    let (Some(mut px), Some(mut py)) = (region.locate(&x), region.locate(&y)) else {
        return (x, y, 0.0, 0);
    };
    // Start from the located points only when they are no worse.
    let q0 = psi_quotient(gm, &x, &y).unwrap_or(0.0);
    let mut q = psi_quotient(gm, &px.x, &py.x).unwrap_or(0.0);
    if q < q0 {
        return (x, y, q0, 0);
    }
    let mut rng = seeded_rng(seed);
    let mut scale = 0.02;
    let mut evals = 0;
    while scale > 1e-10 && evals < 4000 {
        let mut improved = false;
        for _ in 0..8 {
            let move_x = rng.random_bool(0.5);
            let p = if move_x { &px } else { &py };
            let step = random_dir(p.params.len(), &mut rng) * scale;
            evals += 1;
            let Some(moved) = region.nudge(p, &step) else {
                continue;
            };
            let (cx, cy) = if move_x { (&moved.x, &py.x) } else { (&px.x, &moved.x) };
            if let Some(cq) = psi_quotient(gm, cx, cy) {
                if cq > q {
                    q = cq;
                    if move_x {
                        px = moved;
                    } else {
                        py = moved;
                    }
                    improved = true;
                }
            }
        }
        if !improved {
            scale *= 0.5;
        }
    }
    (px.x, py.x, q, evals)
}

/// Recomputes the quotient at the stored witness.
pub fn witness_quotient(gm: &GluingMap, est: &LipschitzEstimate) -> Option<f64> {
    let x = Vector::from_vec(est.worst_pair.0.clone());
    let y = Vector::from_vec(est.worst_pair.1.clone());
    psi_quotient(gm, &x, &y)
}

/// Distance from a state to `D u G`, with `D` given by a parameterized region
/// and `G` by its image under the jump map.
#[derive(Debug)]
pub struct BoundaryDistance {
    jump: Projector,
    landing: Projector,
}

impl BoundaryDistance {
    pub fn new(sys: &HybridSystemDef, jump_set: &ParamSet) -> Result<Self> {
        if jump_set.is_empty() {
            return Err(Error::NoParameterization);
        }
        let landing = ParamSet {
            charts: jump_set
                .charts
                .iter()
                .map(|c| {
                    let (map, sys) = (c.map.clone(), sys.clone());
                    Chart::new(c.lower.clone(), c.upper.clone(), move |s| sys.jump(&map(s)))
                })
                .collect(),
        };
        Ok(Self {
            jump: Projector::euclidean(jump_set.clone()),
            landing: Projector::euclidean(landing),
        })
    }

    pub fn to_jump_set(&self, x: &Vector) -> f64 {
        self.jump.distance(x)
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        self.jump.distance(x).min(self.landing.distance(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellEstimate {
    pub eps_grid: Vec<f64>,
    /// Largest measured half-window per `eps`.
    pub raw_alpha: Vec<f64>,
    /// Running max of `raw_alpha`, the fitted monotone values.
    pub alpha_values: Vec<f64>,
    pub trajectories: usize,
    pub jumps: usize,
}

impl DwellEstimate {
    /// Fitted dwell function: 0 at 0, the value at the smallest grid point not
    /// below `eps`, and the last value beyond the grid.
    pub fn alpha(&self, eps: f64) -> f64 {
        if eps <= 0.0 {
            return 0.0;
        }
        let idx = self.eps_grid.partition_point(|&e| e < eps);
        self.alpha_values
            .get(idx)
            .or(self.alpha_values.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// One side of a jump bracket: offsets from the jump time and the distances
/// to the boundary there.
struct SideScan<'a> {
    exec: &'a HybridExecution,
    dist: &'a BoundaryDistance,
    tau: f64,
    dir: f64,
    limit: f64,
    offsets: Vec<f64>,
    values: Vec<f64>,
}

impl<'a> SideScan<'a> {
    /// Scans outward in parallel chunks until the distance reaches `stop`.
    fn new(
        exec: &'a HybridExecution,
        dist: &'a BoundaryDistance,
        tau: f64,
        dir: f64,
        limit: f64,
        step: f64,
        stop: f64,
    ) -> Self {
        const CHUNK: usize = 64;
        let n = if limit > 0.0 { (limit / step).ceil() as usize } else { 0 };
        let mut scan = Self {
            exec,
            dist,
            tau,
            dir,
            limit,
            offsets: Vec::new(),
            values: Vec::new(),
        };
        let mut next = 0usize;
        while next <= n {
            let end = (next + CHUNK).min(n + 1);
            let offsets: Vec<f64> = (next..end).map(|i| (i as f64 * step).min(limit.max(0.0))).collect();
            let values: Vec<f64> = offsets.par_iter().map(|&s| scan.at(s)).collect();
            let done = values.iter().any(|&d| d >= stop);
            scan.offsets.extend(offsets);
            scan.values.extend(values);
            if done {
                break;
            }
            next = end;
        }
        scan
    }

    /// Distance at offset `s`, on the arc on this side of the jump.
    fn at(&self, s: f64) -> f64 {
        let piece = self.tau + self.dir * (0.5 * s.min(self.limit)).max(1e-12);
        self.dist.distance(&self.exec.state_in_piece(self.tau + self.dir * s, piece))
    }

    /// Offset at which the state first leaves the `eps`-neighbourhood, refined
    /// by bisection; the whole side when it never does.
    fn extent(&self, eps: f64) -> f64 {
        let Some(out) = self.values.iter().position(|&d| d >= eps) else {
            return self.limit.max(0.0);
        };
        if out == 0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (self.offsets[out - 1], self.offsets[out]);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if self.at(mid) < eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Measured half-windows: for every jump, how long the state stays within
/// `eps` of `D u G` on either side, capped at its bracket (halfway to the
/// neighbouring jumps, or to the ends of the horizon). `jump_set` parameterizes the region
/// of `D` the trajectories can come near.
pub fn estimate_dwell_function(
    sys: &HybridSystemDef,
    jump_set: &ParamSet,
    trajectories: &[HybridExecution],
    eps_grid: &[f64],
) -> Result<DwellEstimate> {
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0)) || eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("eps grid must be positive and ascending".into()));
    }
    let bd = BoundaryDistance::new(sys, jump_set)?;
    let jumps: usize = trajectories.iter().map(|e| e.jumps.len()).sum();
    if jumps == 0 {
        return Err(Error::NoJumpsObserved);
    }
    let eps_max = eps_grid[eps_grid.len() - 1];
    let mut raw = vec![0.0f64; eps_grid.len()];
    for exec in trajectories {
        let times = exec.jump_times();
        let horizon = exec.horizon();
        let step = scan_step(exec);
        for (i, &tau) in times.iter().enumerate() {
            let before = if i == 0 { tau } else { 0.5 * (tau - times[i - 1]) };
            let after = match times.get(i + 1) {
                Some(&next) => 0.5 * (next - tau),
                None => horizon - tau,
            };
            let back = SideScan::new(exec, &bd, tau, -1.0, before, step, eps_max);
            let fwd = SideScan::new(exec, &bd, tau, 1.0, after, step, eps_max);
            for (k, &eps) in eps_grid.iter().enumerate() {
                raw[k] = raw[k].max(back.extent(eps)).max(fwd.extent(eps));
            }
        }
    }
    let mut fitted = raw.clone();
    for k in 1..fitted.len() {
        fitted[k] = fitted[k].max(fitted[k - 1]);
    }
    Ok(DwellEstimate {
        eps_grid: eps_grid.to_vec(),
        raw_alpha: raw,
        alpha_values: fitted,
        trajectories: trajectories.len(),
        jumps,
    })
}

fn scan_step(exec: &HybridExecution) -> f64 {
    let step = exec
        .arcs
        .iter()
        .flat_map(|a| a.samples.windows(2).map(|w| w[1].t - w[0].t))
        .fold(0.0, f64::max);
    if step > 0.0 {
        step
    } else {
        1e-3
    }
}

/// A stored sample within `eps` of `D u G` but outside every jump window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellViolation {
    pub trajectory: usize,
    pub t: f64,
    pub eps: f64,
    pub distance: f64,
}

/// Replays trajectories against the fitted windows, for every grid `eps`.
/// A trajectory starting or ending within `eps` of `D u G` is next to a jump
/// outside the horizon, so the two ends then also count as window centres.
pub fn dwell_violations(
    sys: &HybridSystemDef,
    jump_set: &ParamSet,
    estimate: &DwellEstimate,
    trajectories: &[HybridExecution],
) -> Result<Vec<DwellViolation>> {
    let bd = BoundaryDistance::new(sys, jump_set)?;
    let mut out = Vec::new();
    for (ti, exec) in trajectories.iter().enumerate() {
        let jumps = exec.jump_times();
        let samples = exec.flow_samples();
        let dists: Vec<f64> = samples.par_iter().map(|(_, x)| bd.distance(x)).collect();
        let (first, last) = match (dists.first(), dists.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => continue,
        };
        for (k, &eps) in estimate.eps_grid.iter().enumerate() {
            let alpha = estimate.alpha_values[k];
            let mut centres = jumps.clone();
            if first < eps {
                centres.push(samples[0].0);
            }
            if last < eps {
                centres.push(samples[samples.len() - 1].0);
            }
            for ((t, _), &d) in samples.iter().zip(&dists) {
                if d < eps && !centres.iter().any(|&tau| (t - tau).abs() <= alpha) {
                    out.push(DwellViolation {
                        trajectory: ti,
                        t: *t,
                        eps,
                        distance: d,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Options of the glued Lipschitz estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GluedLipschitzOptions {
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for GluedLipschitzOptions {
    fn default() -> Self {
        Self {
            n_pairs: 10_000,
            seed: 0,
        }
    }
}

/// Lipschitz constants of `f_psi` and `h_psi` on `psi(E)`.
///
/// Pairs are a mix of uniform pairs over `E`, local pairs, and seam pairs: a
/// point of `D n E` flowed backward and its jump image flowed forward by the
/// same short time, mapped through `psi`.
pub fn estimate_glued_lipschitz(
    sys: &HybridSystemDef,
    gs: &GluedSystem,
    opts: GluedLipschitzOptions,
) -> Result<(LipschitzEstimate, Option<LipschitzEstimate>)> {
    let pairs = glued_pairs(sys, gs, opts)?;
    let u0 = gs.zero_input();
    let within = gs.m == sys.k;
    let f_est = {
        let (best, rejected) = argmax_quotient(&pairs, |a, b| {
            let den = (a - b).norm();
            (den >= DENOMINATOR_FLOOR).then(|| (gs.field(a, &u0) - gs.field(b, &u0)).norm() / den)
        });
        let (i, q) = best.ok_or(Error::DegenerateSampler)?;
        let (a, b) = pair_to_vecs(&pairs[i].0, &pairs[i].1);
        LipschitzEstimate {
            mode: LipschitzMode::LipschitzFPsi,
            constant: q,
            sample_count: pairs.len(),
            rejected,
            worst_pair: (a, b),
            within_hypothesis: within,
        }
    };
    let h_est = match &gs.h_psi {
        None => None,
        Some(h) => {
            let (best, rejected) = argmax_quotient(&pairs, |a, b| {
                let den = (a - b).norm();
                (den >= DENOMINATOR_FLOOR).then(|| (h(a) - h(b)).norm() / den)
            });
            let (i, q) = best.ok_or(Error::DegenerateSampler)?;
            let (a, b) = pair_to_vecs(&pairs[i].0, &pairs[i].1);
            Some(LipschitzEstimate {
                mode: LipschitzMode::LipschitzHPsi,
                constant: q,
                sample_count: pairs.len(),
                rejected,
                worst_pair: (a, b),
                within_hypothesis: within,
            })
        }
    };
    Ok((f_est, h_est))
}

/// Glued-coordinate pairs used by [`estimate_glued_lipschitz`].
pub fn glued_pairs(sys: &HybridSystemDef, gs: &GluedSystem, opts: GluedLipschitzOptions) -> Result<Vec<(Vector, Vector)>> {
    let e_set = gs
        .invariant_set
        .parameterization
        .as_ref()
        .ok_or(Error::NoParameterization)?;
    let d_set = gs.invariant_set.jump_part.as_ref();
    let mut rng = seeded_rng(opts.seed);
    let psi = &gs.gluing;
    let u0 = sys.zero_input();
    let mut pairs = Vec::with_capacity(opts.n_pairs);
    while pairs.len() < opts.n_pairs {
        let pair = match pairs.len() % 3 {
            0 => Some((psi.apply(&sample_point(e_set, &mut rng)), psi.apply(&sample_point(e_set, &mut rng)))),
            1 => {
                let x = sample_point(e_set, &mut rng);
                let scale = 10f64.powf(rng.random_range(-6.0..=-1.0));
                let dir = Vector::from_iterator(x.len(), (0..x.len()).map(|_| rng.random_range(-1.0..=1.0)));
                let y = &x + dir * scale;
                ((sys.in_flow_set)(&y) && gs.invariant_set.contains(&y)).then(|| (psi.apply(&x), psi.apply(&y)))
            }
            _ => match d_set {
                Some(d) => {
                    let xd = sample_point(d, &mut rng);
                    let eta = 10f64.powf(rng.random_range(-5.0..=-1.0));
                    let before = rk4_step(|_, z| -sys.flow(z, &u0), 0.0, &xd, eta);
                    let after = rk4_step(|_, z| sys.flow(z, &u0), 0.0, &sys.jump(&xd), eta);
                    ((sys.in_flow_set)(&before) && (sys.in_flow_set)(&after))
                        .then(|| (psi.apply(&before), psi.apply(&after)))
                }
                None => Some((psi.apply(&sample_point(e_set, &mut rng)), psi.apply(&sample_point(e_set, &mut rng)))),
            },
        };
        if let Some(p) = pair {
            pairs.push(p);
        }
    }
    Ok(pairs)
}

/// Seam pairs for the bi-Lipschitz negative control: a point of `D` flowed
/// backward and its jump image flowed forward, both by `eta` drawn from
/// `10^[lo, hi]`.
pub fn seam_pair_generator(
    sys: &HybridSystemDef,
    jump_set: ParamSet,
    lo: f64,
    hi: f64,
) -> Arc<dyn Fn(&mut rand_chacha::ChaCha8Rng) -> Option<(Vector, Vector)> + Send + Sync> {
    let sys = sys.clone();
    Arc::new(move |rng| {
        let xd = sample_point(&jump_set, rng);
        let eta = 10f64.powf(rng.random_range(lo..=hi));
        let u0 = sys.zero_input();
        let before = rk4_step(|_, z| -sys.flow(z, &u0), 0.0, &xd, eta);
        let after = rk4_step(|_, z| sys.flow(z, &u0), 0.0, &sys.jump(&xd), eta);
        ((sys.in_flow_set)(&before) && (sys.in_flow_set)(&after)).then_some((before, after))
    })
}
