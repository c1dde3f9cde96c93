use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quaternion is not unit: |q| = {norm}")]
    NonUnitQuaternion { norm: f64 },

    #[error("quaternion has nonzero real part {real}")]
    NotPure { real: f64 },

    #[error("invalid unit tangent vector: {0}")]
    InvalidTangent(String),

    #[error("rotation matrix is not a proper rotation (det = {det}, orthogonality gap = {gap})")]
    DegenerateRotation { det: f64, gap: f64 },

    #[error("vector is not tangent: residual {residual}")]
    NotTangent { residual: f64 },

    #[error("velocity is not g-unit: g(v,v) - 1 = {residual}")]
    NonUnitVelocity { residual: f64 },

    #[error("singular Reeb system at q (determinant {det}); the form is not contact")]
    SingularReebSystem { det: f64 },

    #[error("metric descriptor: {0}")]
    Descriptor(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("orbit is not closed: endpoint gap {gap}")]
    OpenOrbit { gap: f64 },

    #[error("no return to the section before t = {t_max}")]
    NoReturn { t_max: f64 },

    #[error(
        "Newton shooting did not converge after {iterations} iterations (last residual {residual})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("determinant gap {gap} exceeds tolerance")]
    DeterminantGap { gap: f64 },

    #[error("arc under-resolved at sample {index}: argument jump {jump} rad")]
    ArcUnderresolved { index: usize, jump: f64 },

    #[error("winding interval length {length} violates the 1/2 bound")]
    WindingLemmaViolation { length: f64 },

    #[error("degenerate endpoint: tr = {trace}")]
    DegenerateEndpoint { trace: f64 },

    #[error("interval/eigenvalue inconsistency: {0}")]
    ResolutionFailure(String),

    #[error("linking integral residual {residual} from nearest integer (value {value})")]
    LinkingResidual { value: f64, residual: f64 },

    #[error("curvature is not positive: K = {curvature} at {point:?}")]
    NonPositiveCurvature { curvature: f64, point: [f64; 3] },

    #[error("curve is not simple: {0}")]
    NotSimple(String),

    #[error("chart point outside the open annulus: theta = {theta}")]
    OutsideAnnulus { theta: f64 },

    #[error("record: {0}")]
    Record(String),
}
