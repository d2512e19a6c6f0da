//! Constant-Q cepstral coefficients.
//!
//! The constant-Q stage is a direct filter bank rather than a full CQT: each
//! of the 96 geometrically spaced bins is an inner product of the 32 ms frame
//! with a Hann-windowed complex exponential whose length follows the
//! constant-Q rule (capped at the frame length). Log power is then
//! cosine-transformed without uniform resampling.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::cmvn::cmvn;
use super::matrix::{FeatureKind, FeatureMatrix, CQCC_DIMS};
use super::spectrogram::{frame_count, FRAME_LEN, HOP, LOG_FLOOR};
use crate::corpus::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const CQ_BINS: usize = 96;
pub const F_MIN: f64 = 15.0;
pub const F_MAX: f64 = 8000.0;
/// Cepstral coefficients kept (c1..c19); c0 is replaced by frame log energy.
pub const N_CEPS: usize = 19;
pub const STATIC_DIMS: usize = N_CEPS + 1;
/// Half-width of the delta regression window.
pub const DELTA_WINDOW: usize = 2;

struct Kernel {
    offset: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Precomputed constant-Q kernels and DCT basis; reusable across utterances.
pub struct CqccExtractor {
    kernels: Vec<Kernel>,
    dct: Vec<f64>,
}

impl Default for CqccExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl CqccExtractor {
    pub fn new() -> Self {
        let fs = SAMPLE_RATE as f64;
        let octaves = libm::log2(F_MAX / F_MIN);
        let bins_per_octave = (CQ_BINS - 1) as f64 / octaves;
        let q = 1.0 / (libm::exp2(1.0 / bins_per_octave) - 1.0);
        let kernels = (0..CQ_BINS)
            .map(|k| {
                let f = F_MIN * libm::exp2(k as f64 / bins_per_octave);
                let len = (libm::ceil(q * fs / f) as usize).clamp(2, FRAME_LEN);
                let offset = (FRAME_LEN - len) / 2;
                let w: Vec<f64> = (0..len)
                    .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / len as f64))
                    .collect();
                let norm: f64 = w.iter().sum();
                let centre = (offset + len / 2) as f64;
                let (re, im) = (0..len)
                    .map(|i| {
                        let phase = 2.0 * PI * f * ((offset + i) as f64 - centre) / fs;
                        let a = w[i] / norm;
                        (a * libm::cos(phase), -a * libm::sin(phase))
                    })
                    .unzip();
                Kernel { offset, re, im }
            })
            .collect();
        let mut dct = vec![0.0; N_CEPS * CQ_BINS];
        let scale = libm::sqrt(2.0 / CQ_BINS as f64);
        for c in 0..N_CEPS {
            for k in 0..CQ_BINS {
                dct[c * CQ_BINS + k] =
                    scale * libm::cos(PI * (c + 1) as f64 * (k as f64 + 0.5) / CQ_BINS as f64);
            }
        }
        Self { kernels, dct }
    }

    /// Static features per frame: `[log energy, c1..c19]`.
    pub fn static_features(&self, w: &Waveform) -> Result<Vec<[f64; STATIC_DIMS]>> {
        let s = w.samples();
        let frames = frame_count(s.len())?;
        let mut logp = vec![0.0; CQ_BINS];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let frame = &s[t * HOP..t * HOP + FRAME_LEN];
            for (k, ker) in self.kernels.iter().enumerate() {
                let seg = &frame[ker.offset..ker.offset + ker.re.len()];
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..seg.len() {
                    re += seg[i] * ker.re[i];
                    im += seg[i] * ker.im[i];
                }
                logp[k] = libm::log(re * re + im * im + LOG_FLOOR);
            }
            let mut row = [0.0; STATIC_DIMS];
            row[0] = libm::log(frame.iter().map(|v| v * v).sum::<f64>() + LOG_FLOOR);
            for c in 0..N_CEPS {
                let basis = &self.dct[c * CQ_BINS..(c + 1) * CQ_BINS];
                row[c + 1] = basis.iter().zip(&logp).map(|(b, l)| b * l).sum();
            }
            out.push(row);
        }
        Ok(out)
    }

    /// 60-dimensional statics + deltas + double deltas, CMVN-normalised.
    pub fn extract(&self, w: &Waveform) -> Result<FeatureMatrix> {
        let statics = self.static_features(w)?;
        if statics.len() < 2 {
            return Err(Error::TooShort {
                needed: FRAME_LEN + HOP,
                got: w.len(),
            });
        }
        let d1 = deltas(&statics);
        let d2 = deltas(&d1);
        let mut values = Vec::with_capacity(statics.len() * CQCC_DIMS);
        for t in 0..statics.len() {
            values.extend_from_slice(&statics[t]);
            values.extend_from_slice(&d1[t]);
            values.extend_from_slice(&d2[t]);
        }
        let m = FeatureMatrix::new(FeatureKind::Cqcc, statics.len(), CQCC_DIMS, values)?;
        cmvn(&m)
    }
}

/// CQCC features for one (trimmed) utterance.
pub fn cqcc(w: &Waveform) -> Result<FeatureMatrix> {
    CqccExtractor::new().extract(w)
}

/// Regression deltas over `±DELTA_WINDOW` frames with edge replication.
pub fn deltas<const D: usize>(x: &[[f64; D]]) -> Vec<[f64; D]> {
    let n = x.len() as isize;
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|k| (k * k) as f64).sum::<f64>();
    let at = |i: isize| &x[i.clamp(0, n - 1) as usize];
    (0..n)
        .map(|t| {
            let mut d = [0.0; D];
            for k in 1..=DELTA_WINDOW as isize {
                let (a, b) = (at(t + k), at(t - k));
                for j in 0..D {
                    d[j] += k as f64 * (a[j] - b[j]);
                }
            }
            d.iter_mut().for_each(|v| *v /= norm);
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp(n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 / 16000.0;
                    0.4 * libm::sin(2.0 * PI * (200.0 + 900.0 * t) * t)
                        + 0.1 * libm::sin(2.0 * PI * 3100.0 * t)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sixty_normalised_dims() {
        let m = cqcc(&chirp(16000)).unwrap();
        assert_eq!(m.dims(), 60);
        assert_eq!(m.frames(), 97);
        for j in 0..60 {
            let col: Vec<f64> = (0..m.frames()).map(|t| m.get(t, j)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-6, "col {j} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "col {j} var {var}");
        }
    }

    #[test]
    fn constant_trajectory_has_zero_deltas() {
        let x = vec![[1.5, -2.0, 3.0]; 7];
        let d = deltas(&x);
        assert!(d.iter().flatten().all(|&v| v == 0.0));
        assert!(deltas(&d).iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_trajectory_has_unit_delta_inside() {
        let x: Vec<[f64; 1]> = (0..10).map(|t| [t as f64]).collect();
        let d = deltas(&x);
        for v in &d[2..8] {
            assert!((v[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tone_energy_lands_near_its_bin() {
        let ex = CqccExtractor::new();
        let f = 1000.0;
        let w = Waveform::new(
            (0..2048)
                .map(|i| 0.5 * libm::sin(2.0 * PI * f * i as f64 / 16000.0))
                .collect(),
        )
        .unwrap();
        let frame = &w.samples()[..FRAME_LEN];
        let power: Vec<f64> = ex
            .kernels
            .iter()
            .map(|k| {
                let seg = &frame[k.offset..k.offset + k.re.len()];
                let re: f64 = seg.iter().zip(&k.re).map(|(a, b)| a * b).sum();
                let im: f64 = seg.iter().zip(&k.im).map(|(a, b)| a * b).sum();
                re * re + im * im
            })
            .collect();
        let arg = (0..CQ_BINS)
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .unwrap();
        let bpo = (CQ_BINS - 1) as f64 / libm::log2(F_MAX / F_MIN);
        let expected = libm::log2(f / F_MIN) * bpo;
        assert!((arg as f64 - expected).abs() <= 1.0, "{arg} vs {expected}");
    }

    #[test]
    fn too_short() {
        assert!(cqcc(&Waveform::new(vec![0.1; 300]).unwrap()).is_err());
    }
}
