//! Few-shot image-to-image translation on a learned style manifold.
//!
//! The pipeline learns a multi-target translation backbone between a source
//! domain and one or more anchor domains with abundant data, interpolates the
//! anchor style codes with learned simplex weights, and deforms the result
//! toward a few-shot target domain through a residual image generator guided
//! by feature-statistics alignment and a rotated-patch discriminator.
//!
//! Everything numeric is generic over the scalar type ([`Scalar`], `f32` or
//! `f64`); concrete aliases for the common instantiations live at the crate
//! root. Training defaults to `f32`, gradient checks run in `f64`.

pub mod checkpoint;
pub mod data;
pub mod evaluation;
pub mod losses;
pub mod manifold;
pub mod metrics;
pub mod networks;
pub mod residual;
pub mod tensor;
pub mod training;

mod error;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for training and the CLI.
pub type DefaultScalar = f32;

pub type ImageBatch32 = data::ImageBatch<f32>;
pub type ImageBatch64 = data::ImageBatch<f64>;
pub type Networks32 = networks::Networks<f32>;
pub type Networks64 = networks::Networks<f64>;
pub type Trainer32 = training::Trainer<f32>;
pub type Trainer64 = training::Trainer<f64>;
