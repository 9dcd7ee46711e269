//! Disentanglement certificates for multilinear inequalities on finite atomic
//! measure spaces, with the duality and Maurey reductions, vector-valued
//! checks and the counterexample constructions around them.

pub mod error;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
mod ascent;
pub mod counter;
pub mod disentangle;
pub mod oracle;
pub mod vector;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/certificates.md")]
    pub struct Certificates;
    #[doc = include_str!("../../../book/src/constants.md")]
    pub struct Constants;
    #[doc = include_str!("../../../book/src/reductions.md")]
    pub struct Reductions;
    #[doc = include_str!("../../../book/src/vector-valued.md")]
    pub struct VectorValued;
    #[doc = include_str!("../../../book/src/counterexamples.md")]
    pub struct Counterexamples;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
