//! Collision-model engine for multipartite open quantum systems.
//!
//! The crate builds executable collision schedules (repeated brief
//! system-ancilla interactions with fresh ancillas), extracts the Markovian
//! generator they induce in the small-timestep limit, and compares it
//! against closed-form GKLS master equations. Everything is generic over the
//! real scalar type through [`scalar::Scalar`]; the `*64` aliases below are
//! the types almost all callers want.

pub mod cmat;
pub mod collision;
pub mod error;
pub mod fock;
pub mod gkls;
pub mod json;
pub mod linalg;
pub mod models;
pub mod operator;
pub mod ops;
pub mod scalar;
pub mod tol;

pub use error::{Error, Result};
pub use scalar::{Scalar, C};

/// f64 instantiations of the core value types.
pub type CMat64 = cmat::CMat<f64>;
pub type Operator64 = operator::Operator<f64>;
pub type Superoperator64 = gkls::Superoperator<f64>;
pub type GklsSpec64 = gkls::GklsSpec<f64>;
pub type GksBasis64 = gkls::GksBasis<f64>;
pub type CollisionSchedule64 = collision::CollisionSchedule<f64>;
pub type ExtractionReport64 = collision::ExtractionReport<f64>;

/// f32 instantiations, mainly to document that the engine is scalar-generic.
pub type Operator32 = operator::Operator<f32>;
pub type CMat32 = cmat::CMat<f32>;
