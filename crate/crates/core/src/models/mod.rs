//! Ready-made example systems, each validated when it is built.
//!
//! * [`bouncing_ball`]: a ball bouncing elastically, observed through its height.
//! * [`ripple`]: a rotation restricted to a cone, glued by tripling the angle.
//! * [`reflected_di`]: a reflected double integrator lifted with a mode sign.

pub mod bouncing_ball;
pub mod reflected_di;
pub mod ripple;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::{
    build_glued_system, check_glued_field, check_gluing_axioms, check_output_matching,
    check_vector_field_matching, AxiomReport, GluedOverrides, GluedSystem, GluingMap,
    InvariantSetSpec,
};
use crate::hybrid::{check_system, check_transversality, Boundary, HybridSystemDef, SystemReport, TransversalityReport};
use crate::observer::{EkfConfig, OutputInjectionObserver};
use crate::report::CheckReport;
use crate::sampling::{SampleCounts, StateSampler};
use crate::tracking::{
    GluedTrackingLaw, MatchedGluedControl, MatchingFeedback, ReferenceBundle, TrackingController,
};
use crate::{Matrix, Vector};

pub use bouncing_ball::{bouncing_ball, BallParams};
pub use reflected_di::{reflected_double_integrator, ReflectedDiParams};
pub use ripple::ripple_model;

/// Observer attached to a bundle.
#[derive(Clone)]
pub enum ObserverSetup {
    OutputInjection {
        observer: OutputInjectionObserver,
        zeta_hat0: Vector,
    },
    Ekf {
        config: EkfConfig,
        zeta_hat0: Vector,
    },
}

impl ObserverSetup {
    pub fn zeta_hat0(&self) -> &Vector {
        match self {
            Self::OutputInjection { zeta_hat0, .. } | Self::Ekf { zeta_hat0, .. } => zeta_hat0,
        }
    }
}

/// Tracking controller attached to a bundle.
#[derive(Clone)]
pub struct TrackingSetup {
    pub feedback: MatchingFeedback,
    pub control: MatchedGluedControl,
    pub law: GluedTrackingLaw,
    pub controller: TrackingController,
    pub reference: ReferenceBundle,
    /// Linear glued pair `(A, B)` the gain was designed for.
    pub a_lin: Matrix,
    pub b_lin: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDefaults {
    pub x0: Vector,
    pub horizon: f64,
    pub step: f64,
}

/// Checks run while building a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub axioms: AxiomReport,
    pub system: SystemReport,
    pub jump_transversality: TransversalityReport,
    pub landing_transversality: TransversalityReport,
    pub field_matching: CheckReport,
    pub output_matching: Option<CheckReport>,
    /// Closed-form glued maps against their compositions.
    pub glued_field: CheckReport,
    pub glued_output: Option<CheckReport>,
    pub invariant_set: CheckReport,
    /// Model-specific extras, e.g. relaxed matching.
    pub extra: Vec<CheckReport>,
}

impl ValidationSummary {
    pub fn checks(&self) -> Vec<&CheckReport> {
        let mut out: Vec<&CheckReport> = self.axioms.checks().into_iter().collect();
        out.push(&self.system.jump_guard);
        out.push(&self.system.landing);
        out.push(&self.system.disjoint);
        out.extend(self.system.manifold.iter());
        out.extend(self.system.tangency.iter());
        out.push(&self.field_matching);
        out.extend(self.output_matching.iter());
        out.push(&self.glued_field);
        out.extend(self.glued_output.iter());
        out.push(&self.invariant_set);
        out.extend(self.extra.iter());
        out
    }

    /// All certifying checks pass.
    pub fn pass(&self) -> bool {
        self.axioms.pass()
            && self.system.pass()
            && self.jump_transversality.pass
            && self.landing_transversality.pass
            && self.field_matching.pass
            && self.output_matching.as_ref().is_none_or(|r| r.pass)
            && self.glued_field.pass
            && self.glued_output.as_ref().is_none_or(|r| r.pass)
            && self.invariant_set.pass
            && self.extra.iter().all(|r| r.pass)
    }

    fn first_failure(&self) -> Option<String> {
        if !self.jump_transversality.pass {
            return Some("jump transversality".into());
        }
        if !self.landing_transversality.pass {
            return Some("landing transversality".into());
        }
        self.checks()
            .into_iter()
            .filter(|c| c.name != "G5_escape_probe")
            .find(|c| !c.pass)
            .map(|c| format!("{} (worst residual {:e})", c.name, c.worst_residual))
    }
}

/// A fully configured example.
#[derive(Clone)]
pub struct ExampleBundle {
    pub id: String,
    pub sys: HybridSystemDef,
    pub gm: GluingMap,
    pub inv_set: InvariantSetSpec,
    pub glued: GluedSystem,
    pub sampler: StateSampler,
    pub observer: Option<ObserverSetup>,
    pub tracking: Option<TrackingSetup>,
    pub defaults: ScenarioDefaults,
    /// Parameters the bundle was built from, by name.
    pub params: BTreeMap<String, f64>,
    pub validation: ValidationSummary,
}

impl std::fmt::Debug for ExampleBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExampleBundle")
            .field("id", &self.id)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// Sample counts used while building a bundle.
pub const BUILD_COUNTS: SampleCounts = SampleCounts {
    flow: 300,
    jump: 300,
    pairs: 2_000,
};

pub(crate) struct Validated {
    pub glued: GluedSystem,
    pub summary: ValidationSummary,
}

/// Runs the shared checks and builds the glued system. `inputs` are the input
/// values the checks range over (none for autonomous plants).
pub(crate) fn validate(
    sys: &HybridSystemDef,
    gm: &GluingMap,
    inv_set: &InvariantSetSpec,
    sampler: &StateSampler,
    overrides: GluedOverrides,
    inputs: Option<&[Vector]>,
    seed: u64,
) -> Result<Validated> {
    let samples = sampler.draw(sys, BUILD_COUNTS, seed)?;
    let axioms = check_gluing_axioms(sys, gm, sampler, &samples)?;
    let system = check_system(sys, &samples.flow, &samples.jump, inputs)?;
    let jump_transversality = check_transversality(sys, Boundary::Jump, &samples.jump, inputs, None)?;
    let landing: Vec<Vector> = samples.jump.iter().map(|x| sys.jump(x)).collect();
    let landing_transversality = check_transversality(sys, Boundary::Landing, &landing, inputs, None)?;
    let field_matching = check_vector_field_matching(sys, gm, &samples.jump, inputs)?;
    let output_matching = match sys.output_map {
        Some(_) => Some(check_output_matching(sys, &samples.jump)?),
        None => None,
    };
    let glued = build_glued_system(sys, gm, inv_set.clone(), &samples.jump, inputs, overrides)?;
    let glued_field = check_glued_field(sys, &glued, &samples.flow, inputs)?;
    let glued_output = match (&glued.h_psi, &sys.output_map) {
        (Some(hp), Some(h)) => Some(CheckReport::max_residual(
            "glued_output",
            1e-8,
            samples
                .flow
                .iter()
                .filter(|x| !sys.is_jump_point(x))
                .map(|x| ((hp(&gm.apply(x)) - h(x)).norm(), x)),
        )),
        _ => None,
    };
    let invariant_set = inv_set.check_parameterization(BUILD_COUNTS.flow, seed ^ 0xe5e7)?;
    let summary = ValidationSummary {
        axioms,
        system,
        jump_transversality,
        landing_transversality,
        field_matching,
        output_matching,
        glued_field,
        glued_output,
        invariant_set,
        extra: Vec::new(),
    };
    if let Some(what) = summary.first_failure() {
        return Err(Error::Validation(format!("{}: {what}", sys.id)));
    }
    Ok(Validated { glued, summary })
}

/// Bundle constructor taking flat parameter overrides.
pub type BundleFactory = Arc<dyn Fn(&BTreeMap<String, f64>) -> Result<ExampleBundle> + Send + Sync>;

/// One registry entry: id, description and default parameters.
#[derive(Clone)]
pub struct ModelEntry {
    pub id: String,
    pub description: String,
    pub defaults: BTreeMap<String, f64>,
    pub factory: BundleFactory,
}

impl std::fmt::Debug for ModelEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelEntry")
            .field("id", &self.id)
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

/// Bundles addressable by id, listed in id order.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, ModelEntry>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The three shipped examples.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(ModelEntry {
            id: "bouncing_ball".into(),
            description: "elastic bouncing ball with height output".into(),
            defaults: BallParams::default().to_map(),
            factory: Arc::new(|ov| bouncing_ball(BallParams::from_map(ov)?)),
        });
        reg.register(ModelEntry {
            id: "reflected_di".into(),
            description: "reflected double integrator with a switching reference".into(),
            defaults: ReflectedDiParams::default().to_map(),
            factory: Arc::new(|ov| reflected_double_integrator(ReflectedDiParams::from_map(ov)?)),
        });
        reg.register(ModelEntry {
            id: "ripple".into(),
            description: "rotation on a cone glued by angle tripling".into(),
            defaults: BTreeMap::new(),
            factory: Arc::new(|ov| {
                if let Some(k) = ov.keys().next() {
                    return Err(Error::InvalidParameter(format!("ripple has no parameter {k}")));
                }
                ripple_model()
            }),
        });
        reg
    }

    pub fn register(&mut self, entry: ModelEntry) {
        self.entries.insert(entry.id.clone(), entry);
    }

    pub fn get(&self, id: &str) -> Option<&ModelEntry> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ModelEntry> {
        self.entries.values()
    }

    pub fn build(&self, id: &str, overrides: &BTreeMap<String, f64>) -> Result<ExampleBundle> {
        let entry = self
            .get(id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model {id}")))?;
        (entry.factory)(overrides)
    }

    /// One line per model: id, description, and `name=default` parameters.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            let params: Vec<String> = e.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!("{}\t{}\t{}\n", e.id, e.description, params.join(" ")));
        }
        out
    }
}

/// Reads the overrides into `fields`, rejecting unknown names.
pub(crate) fn apply_overrides(
    overrides: &BTreeMap<String, f64>,
    fields: &mut [(&str, &mut f64)],
) -> Result<()> {
    for (k, v) in overrides {
        match fields.iter_mut().find(|(name, _)| name == k) {
            Some((_, slot)) => **slot = *v,
            None => return Err(Error::InvalidParameter(format!("unknown parameter {k}"))),
        }
    }
    Ok(())
}

pub(crate) fn vec2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

pub(crate) fn vec3(a: f64, b: f64, c: f64) -> Vector {
    Vector::from_vec(vec![a, b, c])
}
