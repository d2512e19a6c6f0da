//! File formats, pipeline stages and the experiment runner around
//! [`spoofvae_core`]: WAV and protocol IO, feature caches, model
//! checkpoints, score files, reports and run manifests.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fsx;
pub mod lock;
pub mod manifest;
pub mod models;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod scores;
pub mod stages;
pub mod wav;

pub use error::{Error, Result, Stage};
