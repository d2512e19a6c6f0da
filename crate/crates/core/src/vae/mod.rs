//! Variational autoencoder back-ends: the naive per-class pair, the
//! class-conditional C-VAE and the two auxiliary-classifier variants.
//!
//! Scores are negative-ELBO differences evaluated at `z = mu_z`.

pub mod aux;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod loss;
pub mod model;
pub mod session;

pub use aux::{Aux, LatentClassifier};
pub use config::{conditioning, VaeConfig, Variant};
pub use decoder::{Decoder, Reconstruction};
pub use encoder::{Encoder, Posterior};
pub use loss::{
    gaussian_nll, kl_closed_form, kl_divergence, reparameterize, reparameterize_backward,
};
pub use model::{standard_normal, Estimator, LossTerms, VaeModel, VaeSystem};
pub use session::{filter_class, train_vae, VaeReports, VaeSession};
