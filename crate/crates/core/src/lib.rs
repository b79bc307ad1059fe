//! Measuring and mitigating gender bias in static word embeddings.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F32` / `*F64` aliases below name the common instantiations.

pub mod bench;
pub mod data;
pub mod debias;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gender;
pub mod linalg;
pub mod metrics;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod subspace;
pub mod testgen;

pub use error::{Error, Result};
pub use gender::Gender;
pub use scalar::Scalar;

pub type EmbeddingF32 = embedding::Embedding<f32>;
pub type EmbeddingF64 = embedding::Embedding<f64>;
pub type SubspaceF32 = subspace::GenderSubspace<f32>;
pub type SubspaceF64 = subspace::GenderSubspace<f64>;
