use crate::corpus::Waveform;
use crate::error::{Error, Result};

pub const DEFAULT_TRIM_DB: f64 = 40.0;
/// Short-term energy analysis frame: 25 ms at 16 kHz.
pub const TRIM_FRAME: usize = 400;

/// Drop leading and trailing 25 ms frames whose energy is more than
/// `threshold_db` below the loudest frame.
pub fn trim_silence(w: &Waveform, threshold_db: f64) -> Result<Waveform> {
    let s = w.samples();
    let energies: alloc::vec::Vec<f64> = s
        .chunks(TRIM_FRAME)
        .map(|f| f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64)
        .collect();
    let max = energies.iter().copied().fold(0.0, libm::fmax);
    if max <= 1e-12 {
        return Err(Error::EmptyUtterance);
    }
    let floor = max * libm::pow(10.0, -threshold_db / 10.0);
    let first = energies
        .iter()
        .position(|&e| e >= floor)
        .ok_or(Error::EmptyUtterance)?;
    let last = energies
        .iter()
        .rposition(|&e| e >= floor)
        .ok_or(Error::EmptyUtterance)?;
    let start = first * TRIM_FRAME;
    let end = ((last + 1) * TRIM_FRAME).min(s.len());
    Waveform::new(s[start..end].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use core::f64::consts::PI;

    fn tone(n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * libm::sin(2.0 * PI * 440.0 * i as f64 / 16000.0))
            .collect()
    }

    #[test]
    fn full_scale_tone_is_unchanged() {
        let w = Waveform::new(tone(16000, 1.0)).unwrap();
        assert_eq!(trim_silence(&w, DEFAULT_TRIM_DB).unwrap(), w);
    }

    #[test]
    fn padding_is_removed() {
        let mut s = vec![0.0; 8000];
        s.extend(tone(16000, 0.8));
        s.extend(vec![0.0; 8000]);
        let out = trim_silence(&Waveform::new(s).unwrap(), DEFAULT_TRIM_DB).unwrap();
        assert!(out.len().abs_diff(16000) <= TRIM_FRAME, "{}", out.len());
    }

    #[test]
    fn silence_is_an_error() {
        let w = Waveform::new(vec![0.0; 4000]).unwrap();
        assert_eq!(
            trim_silence(&w, DEFAULT_TRIM_DB),
            Err(Error::EmptyUtterance)
        );
    }
}
