//! Parameterized compact sets and nearest-point search over them.
//!
//! A [`ParamSet`] is a finite union of charts, each a box in parameter space
//! mapped onto the set. A [`Projector`] minimizes `|target - F(chart(s))|` for a
//! feature map `F` (the identity for distances, `psi` for the projection onto
//! `psi(E)`) by a cached grid scan followed by box-constrained
//! Levenberg-Marquardt from the best grid points.

use std::sync::Arc;

use crate::{Matrix, VecFn, Vector};

#[derive(Clone)]
pub struct Chart {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub map: VecFn,
}

impl Chart {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        map: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(lower.len(), upper.len(), "chart bounds must agree in length");
        assert!(
            lower.iter().zip(&upper).all(|(a, b)| a <= b),
            "chart box must be non-empty"
        );
        Self {
            lower,
            upper,
            map: Arc::new(map),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn eval(&self, s: &Vector) -> Vector {
        (self.map)(s)
    }

    /// Clamps `s` into the chart box.
    pub fn clamp(&self, s: &mut Vector) {
        for i in 0..s.len() {
            s[i] = s[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Points of the regular grid with `per_axis` nodes per parameter, in
    /// lexicographic order (first parameter slowest). Zero-width axes get a
    /// single node.
    pub fn grid(&self, per_axis: usize) -> Vec<Vector> {
        let d = self.dim();
        let per_axis = per_axis.max(1);
        let counts: Vec<usize> = (0..d)
            .map(|a| if self.upper[a] > self.lower[a] { per_axis } else { 1 })
            .collect();
        let total: usize = counts.iter().product();
        (0..total)
            .map(|mut idx| {
                let mut s = Vector::zeros(d);
                for axis in (0..d).rev() {
                    let n = counts[axis];
                    let k = idx % n;
                    idx /= n;
                    let w = if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
                    s[axis] = self.lower[axis] + w * (self.upper[axis] - self.lower[axis]);
                }
                s
            })
            .collect()
    }
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chart")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

/// A compact set given as a union of parameterized charts.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    pub charts: Vec<Chart>,
}

impl ParamSet {
    pub fn single(chart: Chart) -> Self {
        Self {
            charts: vec![chart],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }
}

/// Result of a nearest-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub chart: usize,
    pub params: Vector,
    /// The minimizing point of the set.
    pub point: Vector,
    /// Its feature `F(point)`.
    pub image: Vector,
    pub distance: f64,
}

/// Grid nodes per parameter axis of the multistart scan.
pub const GRID_PER_AXIS: usize = 32;
const STARTS: usize = 4;

struct GridNode {
    chart: usize,
    params: Vector,
    image: Vector,
}

/// Nearest-point search in feature space over a [`ParamSet`].
pub struct Projector {
    set: ParamSet,
    feature: VecFn,
    nodes: Vec<GridNode>,
}

impl std::fmt::Debug for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Projector")
            .field("set", &self.set)
            .field("nodes", &self.nodes.len())
            .finish_non_exhaustive()
    }
}

impl Projector {
    pub fn new(set: ParamSet, feature: VecFn) -> Self {
        Self::with_resolution(set, feature, GRID_PER_AXIS)
    }

    pub fn with_resolution(set: ParamSet, feature: VecFn, per_axis: usize) -> Self {
        let nodes = set
            .charts
            .iter()
            .enumerate()
            .flat_map(|(ci, chart)| {
                let feature = &feature;
                chart.grid(per_axis).into_iter().map(move |s| {
                    let image = feature(&chart.eval(&s));
                    GridNode {
                        chart: ci,
                        params: s,
                        image,
                    }
                })
            })
            .collect();
        Self {
            set,
            feature,
            nodes,
        }
    }

    /// Identity feature: plain Euclidean distance to the set.
    pub fn euclidean(set: ParamSet) -> Self {
        Self::new(set, Arc::new(|x: &Vector| x.clone()))
    }

    pub fn set(&self) -> &ParamSet {
        &self.set
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nearest grid node, ties broken by the lowest node index.
    pub fn nearest_grid(&self, target: &Vector) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, node) in self.nodes.iter().enumerate() {
            let d = (&node.image - target).norm_squared();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, d)| (i, d.sqrt()))
    }

    pub fn project(&self, target: &Vector) -> Option<Projection> {
        if self.nodes.is_empty() {
            return None;
        }
        // The STARTS nearest nodes, lower indices first among equal distances.
        let mut starts: Vec<(f64, usize)> = Vec::with_capacity(STARTS + 1);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (&n.image - target).norm_squared();
            if starts.len() < STARTS || d < starts[starts.len() - 1].0 {
                let at = starts.partition_point(|&(bd, _)| bd <= d);
                starts.insert(at, (d, i));
                starts.truncate(STARTS);
            }
        }
        let mut best: Option<Projection> = None;
        for &(_, idx) in &starts {
            let node = &self.nodes[idx];
            let chart = &self.set.charts[node.chart];
            let params = self.refine(chart, node.params.clone(), target);
            let point = chart.eval(&params);
            let image = (self.feature)(&point);
            let distance = (&image - target).norm();
            if best.as_ref().is_none_or(|b| distance < b.distance) {
                best = Some(Projection {
                    chart: node.chart,
                    params,
                    point,
                    image,
                    distance,
                });
            }
        }
        best
    }

    pub fn distance(&self, target: &Vector) -> f64 {
        self.project(target).map_or(f64::INFINITY, |p| p.distance)
    }

    fn residual(&self, chart: &Chart, s: &Vector, target: &Vector) -> Vector {
        (self.feature)(&chart.eval(s)) - target
    }

    /// Box-constrained Levenberg-Marquardt; only non-increasing steps are taken,
    /// so the result is never worse than the start.
    fn refine(&self, chart: &Chart, mut s: Vector, target: &Vector) -> Vector {
        let d = chart.dim();
        if d == 0 {
            return s;
        }
        let scale: Vec<f64> = chart
            .lower
            .iter()
            .zip(&chart.upper)
            .map(|(a, b)| (b - a).max(1e-12))
            .collect();
        let mut r = self.residual(chart, &s, target);
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..100 {
            if cost < 1e-30 {
                break;
            }
            let mut jac = self.param_jacobian(chart, &s, target, &scale);
            // Parameters pinned at a face with descent pointing outward stay fixed.
            let grad = jac.transpose() * &r;
            for j in 0..d {
                let out_hi = s[j] >= chart.upper[j] && grad[j] < 0.0;
                let out_lo = s[j] <= chart.lower[j] && grad[j] > 0.0;
                if out_hi || out_lo {
                    jac.column_mut(j).fill(0.0);
                }
            }
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &r;
            let mut improved = false;
            while lambda < 1e12 {
                let mut lhs = jtj.clone();
                for i in 0..d {
                    lhs[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
                }
                let Some(delta) = lhs.lu().solve(&(-&jtr)) else {
                    lambda *= 4.0;
                    continue;
                };
                let step = delta.iter().zip(&scale).map(|(v, sc)| (v / sc).abs()).fold(0.0, f64::max);
                if step < 1e-13 {
                    break;
                }
                let mut trial = &s + &delta;
                chart.clamp(&mut trial);
                let r_trial = self.residual(chart, &trial, target);
                let c_trial = r_trial.norm_squared();
                if c_trial <= cost {
                    let moved = (&trial - &s)
                        .iter()
                        .zip(&scale)
                        .map(|(v, sc)| (v / sc).abs())
                        .fold(0.0, f64::max);
                    s = trial;
                    r = r_trial;
                    cost = c_trial;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = moved > 1e-13;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        s
    }

    fn param_jacobian(&self, chart: &Chart, s: &Vector, target: &Vector, scale: &[f64]) -> Matrix {
        let d = chart.dim();
        let m = target.len();
        let mut jac = Matrix::zeros(m, d);
        for j in 0..d {
            let h = 1e-7 * scale[j];
            // One-sided differences at the box faces keep evaluations inside the chart.
            let (lo, hi) = (
                (s[j] - h).max(chart.lower[j]),
                (s[j] + h).min(chart.upper[j]),
            );
            if hi <= lo {
                continue;
            }
            let mut sp = s.clone();
            sp[j] = hi;
            let fp = self.residual(chart, &sp, target);
            sp[j] = lo;
            let fm = self.residual(chart, &sp, target);
            jac.set_column(j, &((fp - fm) / (hi - lo)));
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ParamSet {
        ParamSet::single(Chart::new(vec![0.0, 0.0], vec![1.0, 1.0], |s| s.clone()))
    }

    #[test]
    fn grid_is_lexicographic_and_covers_corners() {
        let chart = Chart::new(vec![0.0, -1.0], vec![1.0, 1.0], |s| s.clone());
        let g = chart.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].as_slice(), &[0.0, -1.0]);
        assert_eq!(g[1].as_slice(), &[0.0, 0.0]);
        assert_eq!(g[8].as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn projects_onto_a_square() {
        let p = Projector::euclidean(unit_square());
        let proj = p.project(&Vector::from_vec(vec![2.0, 0.3])).unwrap();
        assert!((proj.point[0] - 1.0).abs() < 1e-12);
        assert!((proj.point[1] - 0.3).abs() < 1e-9);
        assert!((proj.distance - 1.0).abs() < 1e-9);
        let inside = Vector::from_vec(vec![0.41, 0.77]);
        assert!(p.distance(&inside) < 1e-9);
    }

    #[test]
    fn projects_onto_a_circle_through_a_feature() {
        let circle = ParamSet::single(Chart::new(
            vec![-std::f64::consts::PI],
            vec![std::f64::consts::PI],
            |s| Vector::from_vec(vec![s[0].cos(), s[0].sin()]),
        ));
        let p = Projector::euclidean(circle);
        let proj = p.project(&Vector::from_vec(vec![3.0, 4.0])).unwrap();
        assert!((proj.distance - 4.0).abs() < 1e-9);
        assert!((proj.point[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn union_picks_the_closer_chart() {
        let set = ParamSet {
            charts: vec![
                Chart::new(vec![0.0], vec![1.0], |s| Vector::from_vec(vec![s[0], 5.0])),
                Chart::new(vec![0.0], vec![1.0], |s| Vector::from_vec(vec![s[0], -1.0])),
            ],
        };
        let p = Projector::euclidean(set);
        let proj = p.project(&Vector::from_vec(vec![0.5, 0.0])).unwrap();
        assert_eq!(proj.chart, 1);
        assert!((proj.distance - 1.0).abs() < 1e-9);
    }
}
