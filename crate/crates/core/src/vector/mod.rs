//! Vector-valued upgrades: the vector left side, Rademacher averages and
//! p-stable linearisation.

mod lhs;
mod rademacher;
mod stable;

pub use lhs::{scalar_to_vector_check, vector_lhs, VectorCheckReport, VectorInput};
pub use rademacher::{
    khintchine_check, rademacher_type_ratio, type_constant_estimate, MomentEstimate, RademacherSampler, TypeEstimate,
    KHINTCHINE_ENUMERATION, TYPE_ENUMERATION,
};
pub use stable::{
    empirical_characteristic, jensen_check, sample_variance, stable_draw, stable_equivalence_check, stable_moment,
    stable_sample, JensenReport, StableEquivalence, StableSampler, VarianceEstimate,
};
