//! Seeded samplers for states of a hybrid system.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hybrid::HybridSystemDef;
use crate::ode::rk4_step;
use crate::sets::ParamSet;
use crate::Vector;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly chosen chart of `set` and uniform parameters in its box.
pub fn sample_params(set: &ParamSet, rng: &mut impl Rng) -> (usize, Vector) {
    let idx = rng.random_range(0..set.charts.len());
    let chart = &set.charts[idx];
    let s = Vector::from_iterator(
        chart.dim(),
        chart
            .lower
            .iter()
            .zip(&chart.upper)
            .map(|(&a, &b)| if b > a { rng.random_range(a..=b) } else { a }),
    );
    (idx, s)
}

/// Uniform point in a uniformly chosen chart of `set`.
pub fn sample_point(set: &ParamSet, rng: &mut impl Rng) -> Vector {
    let (idx, s) = sample_params(set, rng);
    set.charts[idx].eval(&s)
}

pub fn sample_points(set: &ParamSet, n: usize, rng: &mut impl Rng) -> Vec<Vector> {
    if set.is_empty() {
        return Vec::new();
    }
    (0..n).map(|_| sample_point(set, rng)).collect()
}

/// Maps a state and a scale factor `s >= 1` to a state of `C` that moves off to
/// infinity as `s` grows.
pub type EscapeFn = Arc<dyn Fn(&Vector, f64) -> Vector + Send + Sync>;

/// Regions of the flow and jump sets to draw samples from.
#[derive(Clone)]
pub struct StateSampler {
    /// Region of `C` (points of `D` have measure zero in it).
    pub flow: ParamSet,
    /// Region of `D`.
    pub jump: ParamSet,
    pub escape: EscapeFn,
}

impl std::fmt::Debug for StateSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StateSampler")
            .field("flow", &self.flow)
            .field("jump", &self.jump)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleCounts {
    pub flow: usize,
    pub jump: usize,
    pub pairs: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self {
            flow: 1_000,
            jump: 1_000,
            pairs: 10_000,
        }
    }
}

/// Points of `C`, points of `D`, and pairs of points of `C \ D`.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub flow: Vec<Vector>,
    pub jump: Vec<Vector>,
    pub pairs: Vec<(Vector, Vector)>,
}

impl SampleSet {
    pub fn is_empty(&self) -> bool {
        self.flow.is_empty() && self.jump.is_empty() && self.pairs.is_empty()
    }
}

impl StateSampler {
    pub fn new(flow: ParamSet, jump: ParamSet) -> Self {
        Self {
            flow,
            jump,
            escape: Arc::new(|x, s| x * s),
        }
    }

    pub fn with_escape(mut self, escape: EscapeFn) -> Self {
        self.escape = escape;
        self
    }

    /// Draws samples reproducibly from `seed`.
    ///
    /// Pairs are a mix of independent uniform pairs, nearby pairs at scales
    /// `1e-12 ..= 1e-4`, and seam pairs: a point of `D` flowed backward and its
    /// jump image flowed forward by the same short time, which lie on opposite
    /// sides of the identified boundary.
    pub fn draw(&self, sys: &HybridSystemDef, counts: SampleCounts, seed: u64) -> Result<SampleSet> {
        let mut rng = seeded_rng(seed);
        let flow = sample_points(&self.flow, counts.flow, &mut rng);
        let jump = sample_points(&self.jump, counts.jump, &mut rng);
        if counts.pairs > 0 && self.flow.is_empty() {
            return Err(Error::SamplerEmpty);
        }
        let mut pairs = Vec::with_capacity(counts.pairs);
        let u0 = sys.zero_input();
        while pairs.len() < counts.pairs {
            let kind = pairs.len() % 4;
            let pair = match kind {
                0 | 1 => (
                    sample_point(&self.flow, &mut rng),
                    sample_point(&self.flow, &mut rng),
                ),
                2 => {
                    let x = sample_point(&self.flow, &mut rng);
                    let scale = 10f64.powf(rng.random_range(-12.0..=-4.0));
                    let dir = Vector::from_iterator(x.len(), (0..x.len()).map(|_| rng.random_range(-1.0..=1.0)));
                    let y = &x + dir * scale;
                    if !(sys.in_flow_set)(&y) || sys.is_jump_point(&y) {
                        continue;
                    }
                    (x, y)
                }
                _ => {
                    if self.jump.is_empty() {
                        continue;
                    }
                    let xd = sample_point(&self.jump, &mut rng);
                    let eta = 10f64.powf(rng.random_range(-6.0..=-2.0));
                    let before = rk4_step(|_, z| -sys.flow(z, &u0), 0.0, &xd, eta);
                    let after = rk4_step(|_, z| sys.flow(z, &u0), 0.0, &sys.jump(&xd), eta);
                    if !(sys.in_flow_set)(&before) || !(sys.in_flow_set)(&after) {
                        continue;
                    }
                    (before, after)
                }
            };
            pairs.push(pair);
        }
        let set = SampleSet { flow, jump, pairs };
        if set.is_empty() {
            return Err(Error::SamplerEmpty);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::Chart;

    #[test]
    fn same_seed_same_points() {
        let set = ParamSet::single(Chart::new(vec![0.0, 0.0], vec![1.0, 2.0], |s| s.clone()));
        let a = sample_points(&set, 5, &mut seeded_rng(7));
        let b = sample_points(&set, 5, &mut seeded_rng(7));
        let c = sample_points(&set, 5, &mut seeded_rng(8));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=2.0).contains(&p[1])));
    }
}
