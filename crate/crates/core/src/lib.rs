//! Four-coefficient Sturm-Liouville problems in quasi-derivative form.

pub mod cli;
pub mod coefficients;
pub mod error;
pub mod quad;
pub mod quasi_ode;
pub mod solutions;

pub use coefficients::{
    classify_regularity, effective_potential, limit_point_test, validate_problem,
    ClassificationReport, Coefficient, Endpoint, EndpointVerdict, Interval, Piece, SlProblem,
    Term, ValidatedProblem,
};
pub use error::{Error, Result};
pub use quad::QuadratureConfig;
pub use quasi_ode::{
    count_zeros, integrate_ivp, second_solution, wronskian, Direction, IvpSpec, QuasiState,
    Trajectory,
};
pub use solutions::{
    disconjugacy_check, generalized_boundary_values, is_principal, positive_solution,
    principal_pair, DisconjugacyReport, GeneralizedBoundaryValues, PrincipalPair,
    PrincipalVerdict, TruncationConfig,
};
