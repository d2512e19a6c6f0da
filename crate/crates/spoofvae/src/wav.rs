//! PCM16 mono 16 kHz WAV files.

use std::path::Path;

use spoofvae_core::corpus::{Waveform, SAMPLE_RATE};

use crate::error::{Error, Result};
use crate::fsx;

const FULL_SCALE: f64 = 32767.0;

/// Quantise to 16 bits; amplitude 1.0 maps to 32767.
pub fn encode_sample(s: f64) -> i16 {
    (s * FULL_SCALE).round().clamp(-32768.0, FULL_SCALE) as i16
}

pub fn decode_sample(v: i16) -> f64 {
    (f64::from(v) / FULL_SCALE).max(-1.0)
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = std::io::Cursor::new(Vec::with_capacity(44 + 2 * w.len()));
    {
        let wrap = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = hound::WavWriter::new(&mut buf, spec).map_err(wrap)?;
        for &s in w.samples() {
            writer.write_sample(encode_sample(s)).map_err(wrap)?;
        }
        writer.finalize().map_err(wrap)?;
    }
    fsx::write_bytes(path, &buf.into_inner())
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fsx::read_bytes(path)?;
    let wrap = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(wrap)?;
    let spec = reader.spec();
    let unsupported = |msg: String| Error::Audio {
        path: path.to_path_buf(),
        msg,
    };
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(format!(
            "sample rate {} Hz, expected {SAMPLE_RATE} Hz",
            spec.sample_rate
        )));
    }
    if spec.channels != 1 {
        return Err(unsupported(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(format!(
            "{}-bit {:?} samples, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(decode_sample))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)?;
    Ok(Waveform::new(samples)?)
}
