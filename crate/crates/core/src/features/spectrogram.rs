use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::fft::Fft;
use super::matrix::{FeatureKind, FeatureMatrix, SPECTROGRAM_BINS};
use crate::corpus::Waveform;
use crate::error::{Error, Result};

/// 32 ms analysis frame.
pub const FRAME_LEN: usize = 512;
/// 10 ms frame shift.
pub const HOP: usize = 160;
pub const LOG_FLOOR: f64 = 1e-10;

pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

pub fn frame_count(len: usize) -> Result<usize> {
    if len < FRAME_LEN {
        return Err(Error::TooShort {
            needed: FRAME_LEN,
            got: len,
        });
    }
    Ok((len - FRAME_LEN) / HOP + 1)
}

/// `log(|X|^2 + eps)` over 257 bins of a Hann-windowed 512-point DFT.
pub fn log_power_spectrogram(w: &Waveform) -> Result<FeatureMatrix> {
    let s = w.samples();
    let frames = frame_count(s.len())?;
    let window = periodic_hann(FRAME_LEN);
    let fft = Fft::new(FRAME_LEN);
    let mut values = Vec::with_capacity(frames * SPECTROGRAM_BINS);
    let mut re = vec![0.0; FRAME_LEN];
    let mut im = vec![0.0; FRAME_LEN];
    for t in 0..frames {
        let frame = &s[t * HOP..t * HOP + FRAME_LEN];
        for i in 0..FRAME_LEN {
            re[i] = frame[i] * window[i];
            im[i] = 0.0;
        }
        fft.forward(&mut re, &mut im);
        values.extend(
            (0..SPECTROGRAM_BINS).map(|k| libm::log(re[k] * re[k] + im[k] * im[k] + LOG_FLOOR)),
        );
    }
    FeatureMatrix::new(FeatureKind::Spectrogram, frames, SPECTROGRAM_BINS, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * libm::sin(2.0 * PI * freq * i as f64 / 16000.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn one_second_shape() {
        let m = log_power_spectrogram(&tone(440.0, 16000)).unwrap();
        assert_eq!(m.dims(), 257);
        assert_eq!(m.frames(), 97);
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        // 1000 Hz / (16000 / 512) Hz per bin = bin 32
        let m = log_power_spectrogram(&tone(1000.0, 16000)).unwrap();
        for row in m.rows() {
            let arg = (0..257).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(arg, 32);
        }
    }

    #[test]
    fn too_short() {
        let w = Waveform::new(vec![0.1; 511]).unwrap();
        assert_eq!(
            log_power_spectrogram(&w),
            Err(Error::TooShort {
                needed: 512,
                got: 511
            })
        );
    }
}
