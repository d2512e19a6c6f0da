use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::corpus::Label;
use crate::diffnum::BlockConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, UNIFIED_FRAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One unconditioned model per class.
    Naive,
    /// One model conditioned on the class one-hot.
    Cvae,
    /// C-VAE with an auxiliary classifier on the latent mean.
    Acvae1,
    /// C-VAE with an auxiliary CNN on the reconstruction mean.
    Acvae2,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Naive,
        Variant::Cvae,
        Variant::Acvae1,
        Variant::Acvae2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Naive => "vae",
            Variant::Cvae => "cvae",
            Variant::Acvae1 => "acvae1",
            Variant::Acvae2 => "acvae2",
        }
    }

    pub fn is_conditional(self) -> bool {
        self != Variant::Naive
    }

    pub fn has_aux(self) -> bool {
        matches!(self, Variant::Acvae1 | Variant::Acvae2)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vae" | "naive" => Variant::Naive,
            "cvae" => Variant::Cvae,
            "acvae1" => Variant::Acvae1,
            "acvae2" => Variant::Acvae2,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown VAE variant `{other}`"
                )))
            }
        })
    }
}

/// Class one-hot. With two dimensions spoof is `(1, 0)` and bonafide
/// `(0, 1)`; with `2k` dimensions bonafide phrase `p` sets index `p - 1` and
/// spoof phrase `p` sets index `k + p - 1`.
pub fn conditioning(label: Label, phrase_id: u16, cond_dim: usize) -> Result<alloc::vec::Vec<f64>> {
    let mut y = alloc::vec![0.0; cond_dim];
    match cond_dim {
        0 => {}
        2 => y[if label == Label::Spoof { 0 } else { 1 }] = 1.0,
        d if d % 2 == 0 => {
            let k = d / 2;
            let p = phrase_id as usize;
            if p == 0 || p > k {
                return Err(Error::InvalidArgument(format!(
                    "phrase {phrase_id} does not fit a {cond_dim}-dimensional conditioning"
                )));
            }
            y[if label == Label::Bonafide {
                p - 1
            } else {
                k + p - 1
            }] = 1.0;
        }
        d => {
            return Err(Error::InvalidArgument(format!(
                "conditioning arity {d} is not even"
            )))
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeConfig {
    pub feature_kind: FeatureKind,
    pub frames: usize,
    pub dims: usize,
    pub variant: Variant,
    pub cond_dim: usize,
    pub latent_dim: usize,
    /// Encoder width multiplier `M`: layer `i` has `M * 2^i` filters.
    pub base_channels: usize,
    pub enc_layers: usize,
    /// Temporal extent of every encoder kernel; the frequency extent spans
    /// the layer's full input width.
    pub enc_kernel_t: usize,
    /// Reshape target of the decoder FC layer.
    pub dec_hw: (usize, usize),
    /// Channels after the FC reshape and after each transposed convolution.
    pub dec_channels: [usize; 5],
    pub dec_kernels: [(usize, usize); 4],
    pub head_kernel: (usize, usize),
    pub logvar_min: f64,
    pub logvar_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub aux_hidden: usize,
    pub aux_dropout: f64,
    pub block: BlockConfig,
}

impl VaeConfig {
    /// Architecture at full scale (`d = 128`, `M = 16` spectrogram / `32` CQCC).
    pub fn full(kind: FeatureKind, variant: Variant, cond_dim: usize) -> Result<Self> {
        let kind = kind.base();
        let spec = kind == FeatureKind::Spectrogram;
        let c = Self {
            feature_kind: kind,
            frames: UNIFIED_FRAMES,
            dims: kind.dims(),
            variant,
            cond_dim: if variant.is_conditional() {
                cond_dim
            } else {
                0
            },
            latent_dim: 128,
            base_channels: if spec { 16 } else { 32 },
            enc_layers: if spec { 5 } else { 4 },
            enc_kernel_t: 5,
            dec_hw: if spec { (4, 24) } else { (6, 3) },
            dec_channels: [128, 64, 32, 16, 8],
            dec_kernels: [(5, 10), (5, 20), (5, 20), (5, 20)],
            head_kernel: (5, 5),
            logvar_min: -7.0,
            logvar_max: 7.0,
            alpha: 1.0,
            beta: 1.0,
            aux_hidden: 32,
            aux_dropout: 0.5,
            block: BlockConfig::default(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Reduced widths for single-CPU runs: `M = 8`, `d = 32`, decoder
    /// channels halved.
    pub fn desk(kind: FeatureKind, variant: Variant, cond_dim: usize) -> Result<Self> {
        let mut c = Self::full(kind, variant, cond_dim)?;
        c.base_channels = 8;
        c.latent_dim = 32;
        c.dec_channels = [64, 32, 16, 8, 4];
        c.validate()?;
        Ok(c)
    }

    pub fn fc_width(&self) -> usize {
        self.dec_hw.0 * self.dec_hw.1 * self.dec_channels[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_kind.is_residual() {
            return Err(Error::InvalidArgument(
                "VAEs model frontend features, not residuals".into(),
            ));
        }
        if self.variant.is_conditional() != (self.cond_dim > 0) {
            return Err(Error::InvalidArgument(format!(
                "variant {} with conditioning arity {}",
                self.variant, self.cond_dim
            )));
        }
        if self.cond_dim % 2 != 0 {
            return Err(Error::InvalidArgument(
                "conditioning arity must be even".into(),
            ));
        }
        if self.frames < 8
            || self.dims < 2
            || self.latent_dim == 0
            || self.base_channels == 0
            || self.enc_layers == 0
        {
            return Err(Error::InvalidArgument("VAE sizes must be positive".into()));
        }
        if self.dec_hw.0 == 0 || self.dec_hw.1 == 0 || self.dec_channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "decoder sizes must be positive".into(),
            ));
        }
        if !(self.logvar_min < self.logvar_max) || !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(
                "bad log-variance range or loss weights".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.aux_dropout) || self.aux_hidden == 0 {
            return Err(Error::InvalidArgument(
                "bad auxiliary classifier settings".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_widths() {
        let s = VaeConfig::full(FeatureKind::Spectrogram, Variant::Cvae, 2).unwrap();
        let c = VaeConfig::full(FeatureKind::Cqcc, Variant::Cvae, 2).unwrap();
        assert_eq!(s.fc_width(), 12288);
        assert_eq!(c.fc_width(), 2304);
        assert_eq!(c.enc_layers, 4);
    }

    #[test]
    fn naive_drops_conditioning() {
        let c = VaeConfig::full(FeatureKind::Cqcc, Variant::Naive, 2).unwrap();
        assert_eq!(c.cond_dim, 0);
        let mut bad = c;
        bad.variant = Variant::Cvae;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn one_hot_layouts() {
        assert_eq!(conditioning(Label::Spoof, 3, 2).unwrap(), [1.0, 0.0]);
        assert_eq!(conditioning(Label::Bonafide, 3, 2).unwrap(), [0.0, 1.0]);
        let b = conditioning(Label::Bonafide, 3, 20).unwrap();
        let s = conditioning(Label::Spoof, 3, 20).unwrap();
        assert_eq!(b.iter().position(|v| *v == 1.0), Some(2));
        assert_eq!(s.iter().position(|v| *v == 1.0), Some(12));
        assert!(conditioning(Label::Spoof, 11, 20).is_err());
    }
}
