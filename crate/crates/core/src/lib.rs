//! Coupled generative adversarial networks.
//!
//! Two GANs whose generators share their first layers and whose
//! discriminators share their last layers learn a joint distribution over
//! two image domains from unpaired samples of each domain. The crate also
//! carries the pixel-agreement evaluation, a conditional-GAN baseline,
//! unsupervised domain adaptation through the tied discriminator trunk and
//! cross-domain transformation by latent inversion.

pub mod adaptation;
pub mod cli;
pub mod cogan;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod gan;
pub mod imageio;
pub mod inversion;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
