//! Generative back-ends for replay spoofing detection: a diagonal GMM
//! baseline, naive / conditional / auxiliary-classifier VAEs, a CNN
//! classifier for VAE-residual features, the audio frontends that feed them,
//! and the tandem evaluation metrics (EER, min t-DCF).
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature; file formats and the command line live in the `spoofvae` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cnn;
pub mod corpus;
pub mod diffnum;
pub mod error;
pub mod features;
pub mod gmm;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod vae;

pub use error::{Error, Result};
pub use scalar::Scalar;
