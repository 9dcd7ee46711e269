//! Certificate weights for multilinear inequalities: the feasibility solver,
//! separation oracles, the cutting-plane driver and the q != 1 reductions.

mod family;
mod feasibility;
mod separation;
mod reductions;
mod solve;

pub use family::{ConstraintFamily, ConstraintMember};
pub use feasibility::{
    feasibility_solve, FeasibilityOptions, FeasibilityResult, FeasibilityStatus, FEASIBILITY_TOL, LOG_BOX,
};
pub use separation::{
    separation_oracle, separation_value, OracleBudget, SeparationMethod, SeparationResult, EIGEN_RESIDUAL,
};
pub use solve::{
    certificate_value, check_admissible, check_saturating, disentangle, resolve_constant, verify_certificate, AttemptStatus,
    CapAttempt, CapPolicy, ChainCheck, ConstantSource, OracleRecord, SeparationCheck, SolveOptions, SolveOutcome,
    SolveReport, VerifyOptions, VerifyReport, CAP_LIMIT, POSITIVE_CAP, SEPARATION_TOL,
};
pub use reductions::{
    augmented_instance, augmented_theta, dual_exponent, duality_certificate, maurey_factorise, ReductionReport,
    REDUCTION_TOL,
};
