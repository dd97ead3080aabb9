use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state left the flow set at t = {t} away from the jump set")]
    EscapedFlowSet { t: f64, state: Vec<f64> },
    #[error("more than {max} jumps before t = {t}")]
    MaxJumpsExceeded { max: usize, t: f64 },
    #[error("non-transversal guard crossing at t = {t} (margin {margin:e})")]
    NonTransversalEvent { t: f64, margin: f64 },
    #[error("time {t} outside the execution horizon [0, {horizon})")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("check not applicable: {0}")]
    NotApplicable(String),
    #[error("sampler produced no usable points")]
    SamplerEmpty,
    #[error("matching condition violated: residual {residual:e} at {point:?}")]
    MatchingViolation { residual: f64, point: Vec<f64> },
    #[error("glued trajectory left the glued domain at t = {t}")]
    LeftGluedDomain { t: f64 },
    #[error("invariant set has no parameterization")]
    NoParameterization,
    #[error("point is not in the glued domain: {0:?}")]
    NotInGluedDomain(Vec<f64>),
    #[error("system has no output map")]
    NoOutputMap,
    #[error("Lie derivative order must be positive")]
    OrderNonPositive,
    #[error("immersion condition (I1) violated: residual {residual:e} at {point:?}")]
    I1Violated { residual: f64, point: Vec<f64> },
    #[error("immersion condition (I2) violated: residual {residual:e} at {point:?}")]
    I2Violated { residual: f64, point: Vec<f64> },
    #[error("output signal too sparse: spacing {spacing} exceeds step {step}")]
    SignalTooSparse { spacing: f64, step: f64 },
    #[error("covariance diverged at t = {t} (trace {trace:e})")]
    CovarianceDivergence { t: f64, trace: f64 },
    #[error("flow map is not input affine")]
    NotInputAffine,
    #[error("singular input transform at {0:?}")]
    SingularGamma(Vec<f64>),
    #[error("matrix is not Hurwitz: max real part {max_real}")]
    NotHurwitz { max_real: f64 },
    #[error("no jumps observed in the supplied trajectories")]
    NoJumpsObserved,
    #[error("all sample pairs were rejected")]
    DegenerateSampler,
    #[error("invalid energy band: need 0 < lower < upper, got [{lower}, {upper}]")]
    BadEnergyBand { lower: f64, upper: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model self-validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
