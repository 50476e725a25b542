// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod phi;
pub mod quad;
pub mod rng;
pub mod targets;
pub mod kernels;
pub mod coupling;
pub mod stats;
pub mod spectral;
pub mod experiment;
