//! Audio frontends producing fixed-size feature matrices.

pub mod cmvn;
pub mod cqcc;
mod fft;
mod matrix;
pub mod spectrogram;
pub mod trim;
pub mod unify;

pub use cmvn::cmvn;
pub use cqcc::{cqcc, CqccExtractor};
pub use fft::Fft;
pub use matrix::{FeatureKind, FeatureMatrix, CQCC_DIMS, SPECTROGRAM_BINS, UNIFIED_FRAMES};
pub use spectrogram::log_power_spectrogram;
pub use trim::{trim_silence, DEFAULT_TRIM_DB};
pub use unify::unify_length;

use crate::corpus::Waveform;
use crate::error::{Error, Result};

/// Trim, analyse and unify one utterance, the same way for every back-end.
pub struct Frontend {
    kind: FeatureKind,
    trim_db: f64,
    frames: usize,
    cqcc: Option<CqccExtractor>,
}

impl Frontend {
    pub fn new(kind: FeatureKind) -> Result<Self> {
        if kind.is_residual() {
            return Err(Error::InvalidArgument(alloc::format!(
                "{kind} features are derived from a model, not from audio"
            )));
        }
        Ok(Self {
            kind,
            trim_db: DEFAULT_TRIM_DB,
            frames: UNIFIED_FRAMES,
            cqcc: (kind == FeatureKind::Cqcc).then(CqccExtractor::new),
        })
    }

    pub fn with_trim_db(mut self, db: f64) -> Self {
        self.trim_db = db;
        self
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn process(&self, w: &Waveform) -> Result<FeatureMatrix> {
        let trimmed = trim_silence(w, self.trim_db)?;
        let m = match &self.cqcc {
            Some(ex) => ex.extract(&trimmed)?,
            None => log_power_spectrogram(&trimmed)?,
        };
        unify_length(&m, self.frames)
    }
}
