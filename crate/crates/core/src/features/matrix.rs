use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::diffnum::Array;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Frame count every model consumes after length unification.
pub const UNIFIED_FRAMES: usize = 100;
pub const SPECTROGRAM_BINS: usize = 257;
pub const CQCC_DIMS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Spectrogram,
    Cqcc,
    /// `|x - reconstruction|` of a spectrogram.
    SpectrogramResidual,
    /// `|x - reconstruction|` of a CQCC matrix.
    CqccResidual,
}

impl FeatureKind {
    pub fn dims(self) -> usize {
        match self {
            FeatureKind::Spectrogram | FeatureKind::SpectrogramResidual => SPECTROGRAM_BINS,
            FeatureKind::Cqcc | FeatureKind::CqccResidual => CQCC_DIMS,
        }
    }

    /// The frontend a residual was derived from (identity for frontends).
    pub fn base(self) -> FeatureKind {
        match self {
            FeatureKind::Spectrogram | FeatureKind::SpectrogramResidual => FeatureKind::Spectrogram,
            FeatureKind::Cqcc | FeatureKind::CqccResidual => FeatureKind::Cqcc,
        }
    }

    pub fn residual(self) -> FeatureKind {
        match self.base() {
            FeatureKind::Spectrogram => FeatureKind::SpectrogramResidual,
            _ => FeatureKind::CqccResidual,
        }
    }

    pub fn is_residual(self) -> bool {
        self != self.base()
    }

    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Spectrogram => 0,
            FeatureKind::Cqcc => 1,
            FeatureKind::SpectrogramResidual => 2,
            FeatureKind::CqccResidual => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FeatureKind::Spectrogram,
            1 => FeatureKind::Cqcc,
            2 => FeatureKind::SpectrogramResidual,
            3 => FeatureKind::CqccResidual,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Spectrogram => "spec",
            FeatureKind::Cqcc => "cqcc",
            FeatureKind::SpectrogramResidual => "spec-residual",
            FeatureKind::CqccResidual => "cqcc-residual",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spec" | "spectrogram" => FeatureKind::Spectrogram,
            "cqcc" => FeatureKind::Cqcc,
            "spec-residual" => FeatureKind::SpectrogramResidual,
            "cqcc-residual" => FeatureKind::CqccResidual,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown feature kind `{other}`"
                )))
            }
        })
    }
}

/// `T x D` grid of finite features for one utterance, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    frames: usize,
    dims: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, frames: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if frames * dims != values.len() {
            return Err(shape_err("FeatureMatrix::new", frames * dims, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature matrix contains non-finite values".into(),
            ));
        }
        Ok(Self {
            kind,
            frames,
            dims,
            values,
        })
    }

    pub fn from_rows(kind: FeatureKind, rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        Self::new(kind, rows.len(), dims, rows.concat())
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dims.max(1))
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.dims + d]
    }

    pub fn with_kind(mut self, kind: FeatureKind) -> Self {
        self.kind = kind;
        self
    }

    /// Checks the kind's fixed dimensionality (and optionally the frame count).
    pub fn expect(&self, kind: FeatureKind, frames: Option<usize>) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected {kind} features, got {}",
                self.kind
            )));
        }
        if self.dims != kind.dims() {
            return Err(shape_err("feature dims", kind.dims(), self.dims));
        }
        if let Some(t) = frames {
            if self.frames != t {
                return Err(shape_err("feature frames", t, self.frames));
            }
        }
        Ok(())
    }

    /// Stack matrices of equal shape into an `[N, T, D, 1]` array.
    pub fn stack<T: Scalar>(items: &[&FeatureMatrix]) -> Result<Array<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero matrices".into()))?;
        let (t, d) = (first.frames, first.dims);
        let mut data = Vec::with_capacity(items.len() * t * d);
        for m in items {
            if (m.frames, m.dims) != (t, d) {
                return Err(shape_err(
                    "FeatureMatrix::stack",
                    (t, d),
                    (m.frames, m.dims),
                ));
            }
            data.extend(m.values.iter().map(|&v| T::from_f64(v)));
        }
        Array::from_vec(&[items.len(), t, d, 1], data)
    }
}
