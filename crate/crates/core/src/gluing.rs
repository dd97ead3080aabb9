//! Gluing functions, their axioms, and the glued continuous-time system.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::HybridSystemDef;
use crate::linalg;
use crate::ode::{integrate, InputSignal, Trajectory};
use crate::report::CheckReport;
use crate::sampling::{seeded_rng, SampleSet, StateSampler};
use crate::sets::{ParamSet, Projector};
use crate::{FlowFn, MatFn, Matrix, Predicate, VecFn, Vector};

/// A gluing function `psi: C -> R^m` with its Jacobian and inverse on `psi(C)`.
#[derive(Clone)]
pub struct GluingMap {
    pub m: usize,
    pub psi: VecFn,
    /// Analytic Jacobian; forward differences are used when absent.
    pub d_psi: Option<MatFn>,
    /// Inverse of `psi` restricted to `C \ D`.
    pub psi_inv: VecFn,
    /// Membership in the glued domain `psi(C)`.
    pub glued_domain: Predicate,
}

impl std::fmt::Debug for GluingMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GluingMap")
            .field("m", &self.m)
            .field("analytic_jacobian", &self.d_psi.is_some())
            .finish_non_exhaustive()
    }
}

impl GluingMap {
    pub fn new(
        m: usize,
        psi: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        psi_inv: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        glued_domain: impl Fn(&Vector) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            m,
            psi: Arc::new(psi),
            d_psi: None,
            psi_inv: Arc::new(psi_inv),
            glued_domain: Arc::new(glued_domain),
        }
    }

    pub fn with_jacobian(mut self, d_psi: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.d_psi = Some(Arc::new(d_psi));
        self
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        (self.psi)(x)
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        match &self.d_psi {
            Some(j) => j(x),
            None => self.fd_jacobian(x),
        }
    }

    pub fn fd_jacobian(&self, x: &Vector) -> Matrix {
        linalg::jacobian_forward(|z| (self.psi)(z), x, linalg::FD_STEP)
    }

    /// `psi^{-1}(zeta)`, the preimage outside `D` (the landing side at the seam).
    pub fn unglue(&self, zeta: &Vector) -> Result<Vector> {
        if !(self.glued_domain)(zeta) {
            return Err(Error::NotInGluedDomain(zeta.iter().copied().collect()));
        }
        Ok((self.psi_inv)(zeta))
    }
}

/// A compact forward-invariant set `E` of `C` with explicit coordinates.
#[derive(Clone)]
pub struct InvariantSetSpec {
    pub membership: Predicate,
    pub parameterization: Option<ParamSet>,
    /// `D` intersected with `E`.
    pub jump_part: Option<ParamSet>,
    /// `G` intersected with `E`.
    pub landing_part: Option<ParamSet>,
}

impl std::fmt::Debug for InvariantSetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InvariantSetSpec")
            .field("parameterization", &self.parameterization)
            .finish_non_exhaustive()
    }
}

impl InvariantSetSpec {
    pub fn contains(&self, x: &Vector) -> bool {
        (self.membership)(x)
    }

    /// Sampled check that every chart maps into `E`.
    pub fn check_parameterization(&self, n: usize, seed: u64) -> Result<CheckReport> {
        let set = self.parameterization.as_ref().ok_or(Error::NoParameterization)?;
        let mut rng = seeded_rng(seed);
        let pts = crate::sampling::sample_points(set, n, &mut rng);
        Ok(CheckReport::max_residual(
            "parameterization_in_E",
            0.0,
            pts.iter().map(|x| (if self.contains(x) { 0.0 } else { 1.0 }, x)),
        ))
    }
}

/// Closed-form glued maps registered by a model, replacing the compositions
/// `dpsi(psi^{-1}(zeta)) f(psi^{-1}(zeta), u)` and `h(psi^{-1}(zeta))`.
#[derive(Clone, Default)]
pub struct GluedOverrides {
    pub f_psi: Option<FlowFn>,
    pub h_psi: Option<VecFn>,
}

/// The glued system `zeta' = f_psi(zeta, u)`, `y = h_psi(zeta)` on `psi(C)`.
#[derive(Clone)]
pub struct GluedSystem {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub f_psi: FlowFn,
    pub h_psi: Option<VecFn>,
    pub domain_test: Predicate,
    pub invariant_set: InvariantSetSpec,
    pub gluing: GluingMap,
    projector: Option<Arc<Projector>>,
}

impl std::fmt::Debug for GluedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GluedSystem")
            .field("m", &self.m)
            .field("p", &self.p)
            .field("q", &self.q)
            .finish_non_exhaustive()
    }
}

/// A point of `psi(E)` and its preimage in `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantProjection {
    pub zeta: Vector,
    pub x: Vector,
    pub distance: f64,
}

impl GluedSystem {
    pub fn field(&self, zeta: &Vector, u: &Vector) -> Vector {
        (self.f_psi)(zeta, u)
    }

    pub fn output(&self, zeta: &Vector) -> Option<Vector> {
        self.h_psi.as_ref().map(|h| h(zeta))
    }

    pub fn zero_input(&self) -> Vector {
        Vector::zeros(self.p)
    }

    pub fn projector(&self) -> Option<&Projector> {
        self.projector.as_deref()
    }
}

/// Gluing axioms and the inverse round trip, each with its worst witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub g1: CheckReport,
    pub g2: CheckReport,
    pub g3: CheckReport,
    pub g4: CheckReport,
    /// Escape-to-infinity probe; informative only, never certifying.
    pub g5_probe: CheckReport,
    pub inverse: CheckReport,
}

impl AxiomReport {
    /// All certifying checks pass (the properness probe is excluded).
    pub fn pass(&self) -> bool {
        self.g1.pass && self.g2.pass && self.g3.pass && self.g4.pass && self.inverse.pass
    }

    pub fn checks(&self) -> [&CheckReport; 6] {
        [&self.g1, &self.g2, &self.g3, &self.g4, &self.g5_probe, &self.inverse]
    }
}

const G5_BOUND: f64 = 1e6;

/// Samples each gluing axiom on `samples`; the properness probe uses
/// `sampler.escape` to push flow samples off to infinity.
pub fn check_gluing_axioms(
    sys: &HybridSystemDef,
    gm: &GluingMap,
    sampler: &StateSampler,
    samples: &SampleSet,
) -> Result<AxiomReport> {
    if samples.flow.is_empty() || samples.jump.is_empty() || samples.pairs.is_empty() {
        return Err(Error::SamplerEmpty);
    }
    let g1 = CheckReport::max_residual(
        "G1_jump_identification",
        1e-9,
        samples
            .jump
            .iter()
            .map(|x| ((gm.apply(x) - gm.apply(&sys.jump(x))).norm(), x)),
    );

    let off_jump: Vec<&(Vector, Vector)> = samples
        .pairs
        .iter()
        .filter(|(x, y)| !sys.is_jump_point(x) && !sys.is_jump_point(y))
        .collect();
    let mut close_images = 0usize;
    let g2_items: Vec<(f64, Vector)> = off_jump
        .iter()
        .map(|(x, y)| {
            let close = (gm.apply(x) - gm.apply(y)).norm() <= 1e-9;
            if close {
                close_images += 1;
            }
            let residual = if close { (x - y).norm() } else { 0.0 };
            let mut witness = x.clone().iter().copied().collect::<Vec<_>>();
            witness.extend(y.iter().copied());
            (residual, Vector::from_vec(witness))
        })
        .collect();
    let g2 = CheckReport::max_residual("G2_injectivity", 1e-6, g2_items.iter().map(|(r, w)| (*r, w)))
        .with_note(format!(
            "{} of {} pairs had images within 1e-9",
            close_images,
            g2_items.len()
        ));

    let g3 = CheckReport::max_residual(
        "G3_jacobian_consistency",
        1e-4,
        samples.flow.iter().map(|x| {
            let analytic = gm.jacobian(x);
            let fd = gm.fd_jacobian(x);
            ((analytic - fd).norm() / gm.jacobian(x).norm().max(1.0), x)
        }),
    );

    let mut rng = seeded_rng(0x5eed_9e04);
    let g4_items: Vec<(f64, &Vector)> = samples
        .flow
        .iter()
        .chain(samples.jump.iter())
        .map(|x| {
            let jac = gm.jacobian(x);
            let margin = match sys.r_c_jacobian_at(x) {
                None => linalg::min_singular_value(&jac),
                Some(rc_jac) => {
                    let ker = linalg::kernel_basis(&rc_jac);
                    if ker.ncols() == 0 {
                        0.0
                    } else {
                        let mut worst = f64::INFINITY;
                        for j in 0..ker.ncols() {
                            worst = worst.min((&jac * ker.column(j)).norm());
                        }
                        for _ in 0..4 {
                            let w = Vector::from_iterator(
                                ker.ncols(),
                                (0..ker.ncols()).map(|_| rng.random_range(-1.0..=1.0)),
                            );
                            let v = &ker * w;
                            let nv = v.norm();
                            if nv > 0.0 {
                                worst = worst.min((&jac * v).norm() / nv);
                            }
                        }
                        worst
                    }
                }
            };
            (margin, x)
        })
        .collect();
    let g4 = CheckReport::min_margin("G4_immersion", 1e-8, g4_items);

    let g5_items: Vec<(f64, &Vector)> = samples
        .flow
        .iter()
        .take(200)
        .map(|x| {
            let mut last = gm.apply(x).norm();
            let mut scale = 1.0;
            for _ in 0..40 {
                scale *= 2.0;
                let z = (sampler.escape)(x, scale);
                if !(sys.in_flow_set)(&z) {
                    break;
                }
                last = gm.apply(&z).norm();
                if last > G5_BOUND {
                    break;
                }
            }
            (last, x)
        })
        .collect();
    let g5_probe = CheckReport::min_margin("G5_escape_probe", G5_BOUND, g5_items)
        .with_note("report-only: properness has no finite-sample certificate");

    let inverse = CheckReport::max_residual(
        "inverse_round_trip",
        1e-8,
        samples
            .flow
            .iter()
            .filter(|x| !sys.is_jump_point(x))
            .map(|x| (((gm.psi_inv)(&gm.apply(x)) - x).norm(), x)),
    );

    Ok(AxiomReport {
        g1,
        g2,
        g3,
        g4,
        g5_probe,
        inverse,
    })
}

/// Largest `|dpsi(x) f(x, u) - dpsi(g(x)) f(g(x), u)|` over jump samples and inputs.
pub fn check_vector_field_matching(
    sys: &HybridSystemDef,
    gm: &GluingMap,
    d_samples: &[Vector],
    inputs: Option<&[Vector]>,
) -> Result<CheckReport> {
    if d_samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let zero = [sys.zero_input()];
    let inputs = inputs.filter(|u| !u.is_empty()).unwrap_or(&zero);
    let mut items = Vec::with_capacity(d_samples.len() * inputs.len());
    for x in d_samples {
        let gx = sys.jump(x);
        let (jx, jgx) = (gm.jacobian(x), gm.jacobian(&gx));
        for u in inputs {
            let r = (&jx * sys.flow(x, u) - &jgx * sys.flow(&gx, u)).norm();
            items.push((r, x));
        }
    }
    Ok(CheckReport::max_residual("vector_field_matching", 1e-8, items))
}

/// Largest `|h(x) - h(g(x))|` over jump samples.
pub fn check_output_matching(sys: &HybridSystemDef, d_samples: &[Vector]) -> Result<CheckReport> {
    let h = sys.output_map.as_ref().ok_or(Error::NoOutputMap)?;
    if d_samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(CheckReport::max_residual(
        "output_matching",
        1e-9,
        d_samples.iter().map(|x| ((h(x) - h(&sys.jump(x))).norm(), x)),
    ))
}

/// Builds the glued system after verifying the matching conditions on `d_samples`.
pub fn build_glued_system(
    sys: &HybridSystemDef,
    gm: &GluingMap,
    inv_set: InvariantSetSpec,
    d_samples: &[Vector],
    inputs: Option<&[Vector]>,
    overrides: GluedOverrides,
) -> Result<GluedSystem> {
    let matching = check_vector_field_matching(sys, gm, d_samples, inputs)?;
    if !matching.pass {
        return Err(Error::MatchingViolation {
            residual: matching.worst_residual,
            point: matching.worst_point.unwrap_or_default(),
        });
    }
    if sys.output_map.is_some() {
        let out = check_output_matching(sys, d_samples)?;
        if !out.pass {
            return Err(Error::MatchingViolation {
                residual: out.worst_residual,
                point: out.worst_point.unwrap_or_default(),
            });
        }
    }
    let f_psi: FlowFn = match overrides.f_psi {
        Some(f) => f,
        None => {
            let (sys, gm) = (sys.clone(), gm.clone());
            Arc::new(move |zeta: &Vector, u: &Vector| {
                let x = (gm.psi_inv)(zeta);
                gm.jacobian(&x) * sys.flow(&x, u)
            })
        }
    };
    let h_psi: Option<VecFn> = match (overrides.h_psi, &sys.output_map) {
        (Some(h), _) => Some(h),
        (None, Some(h)) => {
            let (h, inv) = (h.clone(), gm.psi_inv.clone());
            Some(Arc::new(move |zeta: &Vector| h(&inv(zeta))))
        }
        (None, None) => None,
    };
    let projector = inv_set.parameterization.clone().map(|set| {
        let psi = gm.psi.clone();
        Arc::new(Projector::new(set, psi))
    });
    Ok(GluedSystem {
        m: gm.m,
        p: sys.p,
        q: sys.q,
        f_psi,
        h_psi,
        domain_test: gm.glued_domain.clone(),
        invariant_set: inv_set,
        gluing: gm.clone(),
        projector,
    })
}

/// Largest `|f_psi(psi(x), u) - dpsi(x) f(x, u)|` over flow samples off `D`.
pub fn check_glued_field(
    sys: &HybridSystemDef,
    gs: &GluedSystem,
    samples: &[Vector],
    inputs: Option<&[Vector]>,
) -> Result<CheckReport> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let zero = [sys.zero_input()];
    let inputs = inputs.filter(|u| !u.is_empty()).unwrap_or(&zero);
    let mut items = Vec::new();
    for x in samples.iter().filter(|x| !sys.is_jump_point(x)) {
        let zeta = gs.gluing.apply(x);
        let jac = gs.gluing.jacobian(x);
        for u in inputs {
            let r = (gs.field(&zeta, u) - &jac * sys.flow(x, u)).norm();
            items.push((r, x));
        }
    }
    Ok(CheckReport::max_residual("glued_field", 1e-8, items))
}

/// RK4 solution of the glued system; no events.
pub fn simulate_glued(
    gs: &GluedSystem,
    zeta0: &Vector,
    input: &dyn InputSignal,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(gs.domain_test)(zeta0) {
        return Err(Error::NotInGluedDomain(zeta0.iter().copied().collect()));
    }
    integrate(
        |_, z, u| gs.field(z, u),
        input,
        zeta0,
        t_end,
        step,
        |t, z| {
            if (gs.domain_test)(z) {
                Ok(())
            } else {
                Err(Error::LeftGluedDomain { t })
            }
        },
    )
}

/// Nearest point of `psi(E)` to `zeta_hat`, searched over the coordinates of `E`.
pub fn project_to_invariant(gs: &GluedSystem, zeta_hat: &Vector) -> Result<InvariantProjection> {
    let projector = gs.projector.as_ref().ok_or(Error::NoParameterization)?;
    let proj = projector.project(zeta_hat).ok_or(Error::NoParameterization)?;
    Ok(InvariantProjection {
        zeta: proj.image,
        x: proj.point,
        distance: proj.distance,
    })
}

pub fn unglue(gm: &GluingMap, zeta: &Vector) -> Result<Vector> {
    gm.unglue(zeta)
}
