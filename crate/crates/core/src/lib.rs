//! Hybrid systems with state jumps, glued into jump-free continuous systems.
//!
//! A hybrid plant flows on a flow set `C` and jumps on a jump set `D`. A gluing
//! function `psi` identifies every jump-set point with its image under the jump
//! map, so the state trajectory pushed through `psi` no longer jumps. The crate
//! provides
//!
//! * [`hybrid`]: hybrid system definitions and an event-localizing simulator,
//! * [`gluing`]: gluing maps, axiom and matching checks, the glued system,
//! * [`observer`]: glued-domain observers and the windowed error metrics,
//! * [`tracking`]: relaxed-matching feedback and the glued tracking controller,
//! * [`analysis`]: sampling estimators for bi-Lipschitz, dwell and Lipschitz constants,
//! * [`models`]: the bouncing ball, the ripple model and the reflected double integrator.

pub mod analysis;
pub mod error;
pub mod gluing;
pub mod hybrid;
pub mod io;
pub mod linalg;
pub mod models;
pub mod observer;
pub mod ode;
pub mod report;
pub mod sampling;
pub mod sets;
pub mod tracking;

pub use error::{Error, Result};
pub use gluing::{GluedSystem, GluingMap, InvariantSetSpec};
pub use hybrid::{HybridExecution, HybridSystemDef, HybridTimeTrajectory, SimParams};
pub use ode::{InputSignal, ZeroInput};
pub use report::CheckReport;

use std::sync::Arc;

/// Column vector used for states, outputs and inputs.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Jacobians and gains.
pub type Matrix = nalgebra::DMatrix<f64>;

pub type VecFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// Map of a state and an input, e.g. the flow map `f(x, u)`.
pub type FlowFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;
