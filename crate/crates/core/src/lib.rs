//! Multi-sense word embeddings: skip-gram training with an online
//! sense-allocation process, context-driven sense inference, evaluation
//! utilities, and small sequence-composition cells.
//!
//! Core math is generic over the scalar type (`f32` for production training,
//! `f64` for numeric verification); see [`scalar::Scalar`].

pub mod composition;
pub mod corpus;
pub mod eval;
pub mod inference;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use corpus::{TokenStream, Vocabulary};
pub use model::{CrpConfig, ModelMeta, MultiSenseModel, SenseEntry, TrainConfig, TrainMode};

/// Production-precision model (the on-disk format stores f32).
pub type Model32 = MultiSenseModel<f32>;
/// Double-precision model used by numeric verification.
pub type Model64 = MultiSenseModel<f64>;
