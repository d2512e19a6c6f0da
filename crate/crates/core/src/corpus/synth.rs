//! Signal models for bonafide speech stand-ins and replayed copies.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::spec::ReplayChannel;
use super::waveform::{Waveform, SAMPLE_RATE};
use crate::error::Result;
use crate::rng::{self, Rng};

const FS: f64 = SAMPLE_RATE as f64;
pub const SYLLABLES: usize = 5;
/// Highest harmonic frequency rendered.
pub const HARMONIC_LIMIT_HZ: f64 = 7000.0;
pub const LOWPASS_TAPS: usize = 255;

/// Fixed acoustic template of one passphrase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTemplate {
    pub base_hz: [f64; SYLLABLES],
    pub formants: [[f64; 3]; SYLLABLES],
    pub fricative: [bool; SYLLABLES],
    pub weights: [f64; SYLLABLES],
}

impl PhraseTemplate {
    pub fn for_phrase(phrase_id: u16) -> Self {
        let mut r = rng::stream_n(0x5048_5241_5345, "phrase", phrase_id as u64);
        let base_hz = core::array::from_fn(|_| r.random_range(95.0..180.0));
        let formants = core::array::from_fn(|_| {
            [
                r.random_range(300.0..900.0),
                r.random_range(900.0..2400.0),
                r.random_range(2400.0..3600.0),
            ]
        });
        let fricative = core::array::from_fn(|_| r.random_bool(0.5));
        let weights = core::array::from_fn(|_| r.random_range(0.6..1.4));
        Self {
            base_hz,
            formants,
            fricative,
            weights,
        }
    }
}

/// Per-speaker perturbation of the phrase templates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speaker {
    pub pitch: f64,
    pub gain_db: f64,
    pub formant_scale: f64,
}

impl Speaker {
    pub fn new(corpus_seed: u64, speaker_id: u32) -> Self {
        let mut r = rng::stream_n(corpus_seed, "speaker", speaker_id as u64);
        Self {
            pitch: r.random_range(0.9..1.1),
            gain_db: r.random_range(-3.0..3.0),
            formant_scale: r.random_range(0.95..1.05),
        }
    }
}

fn gauss(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

/// RBJ band-pass biquad (constant 0 dB peak gain).
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl Biquad {
    fn band_pass(centre: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * centre / FS;
        let alpha = libm::sin(w0) / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * libm::cos(w0) / a0, (1.0 - alpha) / a0],
            z: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z[0];
        self.z[0] = self.b[1] * x - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

fn formant_gain(f: f64, formants: &[f64; 3], scale: f64) -> f64 {
    let bw = [80.0, 120.0, 180.0];
    let mut g = 0.0;
    for (i, &fc) in formants.iter().enumerate() {
        let u = (f - fc * scale) / bw[i];
        g += [1.0, 0.6, 0.35][i] / (1.0 + u * u);
    }
    // gentle spectral tilt plus a floor so high harmonics never vanish
    g / (1.0 + f / 1500.0) + 0.01
}

/// Render a bonafide utterance of `phrase` by `speaker`.
///
/// `r` drives duration, timing jitter and noise; the phrase template and the
/// speaker fix everything else.
pub fn synth_bonafide(
    phrase: &PhraseTemplate,
    speaker: &Speaker,
    min_dur: f64,
    max_dur: f64,
    r: &mut Rng,
) -> Result<Waveform> {
    let total = r.random_range(min_dur..=max_dur);
    let n = (total * FS) as usize;
    let lead = r.random_range(0.04..0.18) * FS;
    let trail = r.random_range(0.04..0.18) * FS;
    let speech = (n as f64 - lead - trail).max(0.1 * FS);

    let weights: [f64; SYLLABLES] =
        core::array::from_fn(|k| phrase.weights[k] * r.random_range(0.85..1.15));
    let wsum: f64 = weights.iter().sum();
    let mut out = vec![0.0; n];
    let mut start = lead;
    for k in 0..SYLLABLES {
        let len = speech * weights[k] / wsum;
        let voiced = len * 0.82;
        let s0 = start as usize;
        let s1 = ((start + voiced) as usize).min(n);
        let f0 = phrase.base_hz[k] * speaker.pitch * r.random_range(0.97..1.03);
        let glide = r.random_range(-0.12..0.12);
        let vib_rate = r.random_range(4.0..6.5);
        render_voiced(
            &mut out[s0..s1],
            f0,
            glide,
            vib_rate,
            &phrase.formants[k],
            speaker.formant_scale,
        );
        if phrase.fricative[k] {
            let burst = ((0.06 * FS) as usize).min(s1 - s0);
            let mut bp = Biquad::band_pass(r.random_range(4200.0..6000.0), 1.2);
            for i in 0..burst {
                let env = libm::sin(PI * i as f64 / burst as f64);
                out[s0 + i] += 0.35 * env * bp.step(gauss(r));
            }
        }
        start += len;
    }
    // breath noise under the voiced region, a faint room floor everywhere
    let mut breath = Biquad::band_pass(3500.0, 0.5);
    let (b0, b1) = (lead as usize, ((lead + speech) as usize).min(n));
    for (i, v) in out.iter_mut().enumerate() {
        let nb = breath.step(gauss(r));
        if (b0..b1).contains(&i) {
            *v += 0.012 * nb;
        }
        *v += 2e-4 * gauss(r);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let target = 0.5 * libm::pow(10.0, speaker.gain_db / 20.0);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= target / peak);
    }
    Waveform::new(out)
}

fn render_voiced(
    out: &mut [f64],
    f0: f64,
    glide: f64,
    vib_rate: f64,
    formants: &[f64; 3],
    fscale: f64,
) {
    let n = out.len();
    if n == 0 {
        return;
    }
    const BLOCK: usize = 64;
    let mut phase = 0.0;
    let mut amps: Vec<f64> = Vec::new();
    for (i, o) in out.iter_mut().enumerate() {
        let frac = i as f64 / n as f64;
        let f = f0
            * (1.0 + glide * (frac - 0.5))
            * (1.0 + 0.01 * libm::sin(2.0 * PI * vib_rate * i as f64 / FS));
        if i % BLOCK == 0 {
            amps.clear();
            let mut h = 1.0;
            while h * f < HARMONIC_LIMIT_HZ {
                amps.push(formant_gain(h * f, formants, fscale));
                h += 1.0;
            }
        }
        phase += 2.0 * PI * f / FS;
        if phase > 2.0 * PI {
            phase -= 2.0 * PI;
        }
        // sin(h*phase) by the Chebyshev recurrence
        let c2 = 2.0 * libm::cos(phase);
        let (mut s_prev, mut s_cur) = (0.0, libm::sin(phase));
        let mut acc = 0.0;
        for &a in &amps {
            acc += a * s_cur;
            let s_next = c2 * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = s_next;
        }
        let env = libm::sin(PI * frac);
        *o += env * env * acc;
    }
}

/// Blackman-windowed sinc low-pass, unit DC gain, `LOWPASS_TAPS` long.
pub fn lowpass_kernel(cutoff_hz: f64) -> Vec<f64> {
    let m = LOWPASS_TAPS - 1;
    let fc = cutoff_hz / FS;
    let mut h: Vec<f64> = (0..LOWPASS_TAPS)
        .map(|i| {
            let x = i as f64 - m as f64 / 2.0;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                libm::sin(2.0 * PI * fc * x) / (PI * x)
            };
            let w = 0.42 - 0.5 * libm::cos(2.0 * PI * i as f64 / m as f64)
                + 0.08 * libm::cos(4.0 * PI * i as f64 / m as f64);
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Causal FIR filtering truncated to the input length.
fn convolve_causal(x: &[f64], taps: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let kmax = taps.len().min(n + 1);
            (0..kmax).map(|k| taps[k] * x[n - k]).sum()
        })
        .collect()
}

/// Zero-phase FIR filtering with a centred odd-length kernel.
fn convolve_centred(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = taps.len() / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = half.saturating_sub(i);
            let hi = taps.len().min(n + half - i);
            (lo..hi).map(|k| taps[k] * x[i + k - half]).sum()
        })
        .collect()
}

/// Parallel feedback combs; delays in samples are mutually prime.
fn reverb_tail(x: &[f64], decay: f64) -> Vec<f64> {
    const DELAYS: [usize; 4] = [463, 587, 659, 733];
    let mut out = vec![0.0; x.len()];
    for d in DELAYS {
        let g = libm::exp(-(d as f64) / (decay * FS));
        let mut buf = vec![0.0; x.len()];
        for i in 0..x.len() {
            let fb = if i >= d { buf[i - d] } else { 0.0 };
            buf[i] = x[i] + g * fb;
            if i >= d {
                out[i] += g * buf[i - d] / DELAYS.len() as f64;
            }
        }
    }
    out
}

/// Pass `w` through a simulated replay chain. Output has the input length.
pub fn synth_replay(w: &Waveform, ch: &ReplayChannel, seed: u64) -> Result<Waveform> {
    ch.validate()?;
    let mut y = if ch.ir_taps.len() == 1 {
        w.samples().iter().map(|v| v * ch.ir_taps[0]).collect()
    } else {
        convolve_causal(w.samples(), &ch.ir_taps)
    };
    if ch.cutoff_hz < FS / 2.0 {
        y = convolve_centred(&y, &lowpass_kernel(ch.cutoff_hz));
    }
    if ch.reverb_decay > 0.0 {
        let tail = reverb_tail(&y, ch.reverb_decay);
        y.iter_mut().zip(&tail).for_each(|(a, b)| *a += b);
    }
    if ch.snr_db.is_finite() {
        let power = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let sigma = libm::sqrt(power / libm::pow(10.0, ch.snr_db / 10.0));
        let mut r = rng::stream(seed, "replay-noise");
        y.iter_mut().for_each(|v| *v += sigma * gauss(&mut r));
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    if peak > 1.0 {
        y.iter_mut().for_each(|v| *v /= peak);
    }
    Waveform::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::log_power_spectrogram;

    fn white(n: usize, seed: u64) -> Waveform {
        let mut r = rng::stream(seed, "white");
        Waveform::new(
            (0..n)
                .map(|_| (0.2 * gauss(&mut r)).clamp(-1.0, 1.0))
                .collect(),
        )
        .unwrap()
    }

    fn band_energy(w: &Waveform, lo_hz: f64) -> f64 {
        let m = log_power_spectrogram(w).unwrap();
        let lo = (lo_hz / 31.25).ceil() as usize;
        m.rows()
            .map(|r| r[lo..].iter().map(|v| libm::exp(*v)).sum::<f64>())
            .sum()
    }

    #[test]
    fn identity_channel_is_exact() {
        let w = white(4000, 1);
        assert_eq!(synth_replay(&w, &ReplayChannel::identity(), 9).unwrap(), w);
    }

    #[test]
    fn lowpass_attenuates_high_band() {
        let w = white(16000, 2);
        let ch = ReplayChannel {
            cutoff_hz: 2000.0,
            ..ReplayChannel::identity()
        };
        let out = synth_replay(&w, &ch, 3).unwrap();
        let drop_db = 10.0 * libm::log10(band_energy(&w, 3000.0) / band_energy(&out, 3000.0));
        assert!(drop_db >= 20.0, "{drop_db}");
    }

    #[test]
    fn length_is_preserved() {
        let w = white(5000, 4);
        for ch in ReplayChannel::defaults() {
            let out = synth_replay(&w, &ch, 5).unwrap();
            assert_eq!(out.len(), w.len());
            assert!(out.peak() <= 1.0);
        }
    }

    #[test]
    fn bonafide_is_deterministic_and_bounded() {
        let p = PhraseTemplate::for_phrase(3);
        let s = Speaker::new(1, 4);
        let a = synth_bonafide(&p, &s, 1.2, 3.0, &mut rng::stream(1, "u")).unwrap();
        let b = synth_bonafide(&p, &s, 1.2, 3.0, &mut rng::stream(1, "u")).unwrap();
        assert_eq!(a, b);
        assert!(a.duration_secs() >= 1.2 - 1e-3 && a.duration_secs() <= 3.0);
        assert!(a.peak() <= 0.5 * libm::pow(10.0, 0.15) + 1e-12);
    }

    #[test]
    fn phrases_differ() {
        assert_ne!(PhraseTemplate::for_phrase(1), PhraseTemplate::for_phrase(2));
    }
}
