//! Error type shared by all modules.

use thiserror::Error;

/// Everything that can go wrong, from malformed problem definitions to
/// numerical breakdown inside the solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("empty interval: a = {a} must be strictly less than b = {b}")]
    EmptyInterval { a: f64, b: f64 },

    #[error("coefficient {name} is not strictly positive: value {value:.6e} at x = {x:.6e}")]
    NonPositiveCoefficient { name: char, x: f64, value: f64 },

    #[error("coefficient {name} is not locally integrable: power piece with exponent {exponent} touches interior point x = {x:.6e}")]
    NonLocallyIntegrable { name: char, x: f64, exponent: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("oscillatory witness: solution at lambda = {lambda} keeps oscillating toward the endpoint; supply a smaller lambda")]
    OscillatoryWitness { lambda: f64 },

    #[error("coefficient piece has no derivative formula at x = {x:.6e}")]
    NotDifferentiable { x: f64 },

    #[error("step size underflow at x = {x:.6e} (h = {h:.3e}); singular or stiff point reached")]
    StepSizeUnderflow { x: f64, h: f64 },

    #[error("target {x} is a singular endpoint; integrate to a truncated interior point instead")]
    EndpointSingular { x: f64 },

    #[error("x = {x:.6e} is outside the covered range [{lo:.6e}, {hi:.6e}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("trajectories carry different spectral parameters ({0} vs {1})")]
    LambdaMismatch(f64, f64),

    #[error("nontriviality violated: |u| and |u^[1]| both below {floor:.3e} at x = {x:.6e}")]
    TrivialState { x: f64, floor: f64 },

    #[error("base solution vanishes at x = {x:.6e} inside the requested range")]
    VanishingBase { x: f64 },

    #[error("tau - lambda is oscillatory at the endpoint for lambda = {lambda}")]
    Oscillatory { lambda: f64 },

    #[error("principal-solution construction did not stabilize: {0}")]
    DivergentConstruction(String),

    #[error("solution vanishes near the endpoint; principal test undefined")]
    VanishingNearEndpoint,

    #[error("integration failure: {0}")]
    IntegrationFailure(String),

    #[error("positivity only holds within noise of zero (min {min:.3e} against scale {scale:.3e})")]
    NumericallyDegenerate { min: f64, scale: f64 },

    #[error("boundary-value limit did not converge: Wronskian route gives {wronskian:.6e}, ratio route gives {ratio:.6e}")]
    NonConvergentLimit { wronskian: f64, ratio: f64 },

    #[error("generalized boundary values refused: endpoint {endpoint} is in the limit point case")]
    LimitPointEndpoint { endpoint: char },

    #[error("eigenvalue bracketing failed: {0}")]
    BracketFailure(String),

    #[error("function does not vanish at the boundary: |f({x:.6e})| = {value:.3e}")]
    BoundaryViolation { x: f64, value: f64 },

    #[error("strict monotonicity violated between intervals {outer:?} and {inner:?}: {lambda_outer} !< {lambda_inner}")]
    MonotonicityViolation {
        outer: (f64, f64),
        inner: (f64, f64),
        lambda_outer: f64,
        lambda_inner: f64,
    },

    #[error("intervals are not strictly nested: {outer:?} does not strictly contain {inner:?}")]
    NotStrictlyNested { outer: (f64, f64), inner: (f64, f64) },

    #[error("still disconjugate at the search ceiling lambda = {ceiling}; raise the ceiling")]
    CeilingReached { ceiling: f64 },

    #[error("not disconjugate even at the search floor lambda = {floor}; lower the floor")]
    FloorReached { floor: f64 },

    #[error("base solution is not strictly positive on the grid (value {value:.3e} at x = {x:.6e})")]
    NonPositive { x: f64, value: f64 },

    #[error("function support violates compactness: nonzero value {value:.3e} at x = {x:.6e} near the boundary")]
    SupportViolation { x: f64, value: f64 },

    #[error("operation requires a regular problem; {reason}")]
    NotRegular { reason: String },

    #[error("problem file error: {0}")]
    ProblemFile(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Exit-code class for the CLI: 1 for validation/input errors, 2 for
    /// numerical failures.
    pub fn exit_class(&self) -> i32 {
        match self {
            Error::EmptyInterval { .. }
            | Error::NonPositiveCoefficient { .. }
            | Error::NonLocallyIntegrable { .. }
            | Error::NotDifferentiable { .. }
            | Error::OutOfRange { .. }
            | Error::LambdaMismatch(..)
            | Error::VanishingBase { .. }
            | Error::EndpointSingular { .. }
            | Error::NotStrictlyNested { .. }
            | Error::SupportViolation { .. }
            | Error::BoundaryViolation { .. }
            | Error::NotRegular { .. }
            | Error::ProblemFile(_)
            | Error::LimitPointEndpoint { .. }
            | Error::InvalidInput(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
