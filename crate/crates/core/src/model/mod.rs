//! Finite atomic measure spaces, operators, exponent profiles and instances.

mod certificate;
mod instance;
mod measure;
mod operator;
mod profile;

pub use certificate::{geometric_mean_floor, geometric_means, Certificate};
pub(crate) use instance::lhs_from_images;
pub use instance::{
    parse_instance, ExponentValue, ExponentsDocument, Instance, InstanceDocument, NamedExponent, OperatorDocument,
};
pub(crate) use measure::lp_norm_raw;
pub use measure::{lp_norm, AtomicMeasureSpace, DiscreteFunction};
pub use operator::{OperatorMatrix, Saturation};
pub use profile::{ExponentProfile, HOMOGENEITY_TOL};
