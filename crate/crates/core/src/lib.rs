//! Alignment of speaker embedding spaces produced by two independently trained
//! models, so that voice profiles enrolled with one model can be scored against
//! runtime embeddings from the other.
//!
//! Two families of aligners are provided:
//!
//! * speaker-logit scoring ([`logit`]), which compares utterances through their
//!   similarity to a shared set of reference speakers and collapses that
//!   comparison into a `2d × 2d` triangular transform, and
//! * learned MLP aligners ([`nessa`]) trained with regression and contrastive
//!   objectives.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the data
//! layer and the experiment pipeline run in `f64`.

pub mod data;
pub mod error;
pub mod logit;
pub mod metrics;
pub mod nessa;
pub mod nn;
pub mod numerics;
pub mod pipeline;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Vec64 = numerics::Vector<f64>;
pub type Mat64 = numerics::Matrix<f64>;
pub type Vec32 = numerics::Vector<f32>;
pub type Mat32 = numerics::Matrix<f32>;

/// The aligner network in double precision.
pub type MlpAligner = nn::Mlp<f64>;
pub type AdamState = nn::Adam<f64>;
pub type WeightMatrix = logit::WeightMatrix<f64>;
pub type FusionTransform = logit::FusionTransform<f64>;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
