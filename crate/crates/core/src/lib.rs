//! Shadowing toolkit for nonautonomous ODEs: logarithmic norms, exponential
//! dichotomies, shadowing certificates and numerical shadowing of pseudosolutions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod linear_dynamics;
pub mod lognorm;
pub mod numerics;
pub(crate) mod ode;
pub mod pseudo;
pub mod region;
pub mod replicate;
pub mod shadow;
pub mod systems;

pub use error::{Error, Result};
pub use linalg::{Matrix, NormKind, Vector};
