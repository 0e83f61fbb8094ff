//! Selective-subnetwork adversarial domain adaptation for image-to-image
//! translation networks.
//!
//! A U-Net translator trained on a labeled source domain is adapted to an
//! unlabeled target domain by adversarial alignment of its outputs, with
//! only a chosen subset of its convolutional blocks allowed to change. An
//! ensemble of independently adapted translators supplies a per-pixel
//! uncertainty estimate that picks the adaptation depth and critic learning
//! rate without target labels.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type used by the command-line pipeline.

pub mod adapt;
pub mod bench;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod perturb;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod uncertainty;

pub use error::{Error, Result};
pub use image::{Domain, Image, Plane};
pub use nn::block::NormKind;
pub use nn::discriminator::{DiscriminatorConfig, DiscriminatorModel};
pub use nn::freeze::{FreezeSchedule, LayerRegistry};
pub use nn::generator::{GeneratorConfig, GeneratorModel};
pub use nn::Network;
pub use scalar::Real;

/// Scalar type used by the pipeline and the CLI.
pub type Scalar = f32;
pub type Generator = GeneratorModel<f32>;
pub type Discriminator = DiscriminatorModel<f32>;
pub type Img = Image<f32>;
pub type Generator64 = GeneratorModel<f64>;
pub type Img64 = Image<f64>;
