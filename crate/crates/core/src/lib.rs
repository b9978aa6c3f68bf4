//! Invertible coupling network for unpaired low-light image enhancement.
//!
//! The crate bundles a small autodiff tensor engine, an invertible generator
//! built from affine coupling layers over squeezed sub-images, PatchGAN
//! discriminators, the training objectives (LSGAN, transformation
//! consistency, detail preservation through a guided filter, reversibility),
//! an unpaired adversarial trainer, progressive self-guided inference, and a
//! NIQE no-reference quality metric.

pub mod enhancer;
pub mod error;
pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod discriminator;
pub mod gradcheck;
pub mod guided;
pub mod image_io;
pub mod invnet;
pub mod losses;
pub mod niqe;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Gradients, Scalar, Tape, Tensor};
