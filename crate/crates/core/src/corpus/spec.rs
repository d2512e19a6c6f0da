use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::trial::Split;
use crate::error::{Error, Result};

/// Playback device plus room: colouration, band limit, reverberation, noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayChannel {
    pub name: String,
    pub ir_taps: Vec<f64>,
    pub cutoff_hz: f64,
    /// `f64::INFINITY` disables additive noise.
    pub snr_db: f64,
    /// Reverberation time constant in seconds; 0 disables the tail.
    pub reverb_decay: f64,
}

impl ReplayChannel {
    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            ir_taps: vec![1.0],
            cutoff_hz: 8000.0,
            snr_db: f64::INFINITY,
            reverb_decay: 0.0,
        }
    }

    /// Three channels of increasing severity.
    pub fn defaults() -> Vec<Self> {
        vec![
            Self {
                name: "R1".into(),
                ir_taps: vec![1.0, 0.25, -0.1],
                cutoff_hz: 3400.0,
                snr_db: 25.0,
                reverb_decay: 0.03,
            },
            Self {
                name: "R2".into(),
                ir_taps: vec![1.0, 0.4, -0.15, 0.05],
                cutoff_hz: 2500.0,
                snr_db: 20.0,
                reverb_decay: 0.06,
            },
            Self {
                name: "R3".into(),
                ir_taps: vec![1.0, 0.55, 0.1, -0.2, 0.08],
                cutoff_hz: 1800.0,
                snr_db: 15.0,
                reverb_decay: 0.1,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.ir_taps.is_empty() || self.ir_taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "channel {}: ir_taps must be nonempty and finite",
                self.name
            )));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz <= 8000.0) {
            return Err(Error::InvalidSpec(format!(
                "channel {}: cutoff_hz must be in (0, 8000]",
                self.name
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidSpec(format!(
                "channel {}: snr_db must be finite or +inf",
                self.name
            )));
        }
        if !(self.reverb_decay >= 0.0 && self.reverb_decay.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "channel {}: reverb_decay must be >= 0",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub first_speaker: u32,
    pub n_speakers: u32,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

impl SplitSpec {
    pub fn speakers(&self) -> core::ops::Range<u32> {
        self.first_speaker..self.first_speaker + self.n_speakers
    }

    pub fn total(&self) -> usize {
        self.n_bonafide + self.n_spoof
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub splits: [SplitSpec; 3],
    pub n_phrases: u16,
    pub replay_channels: Vec<ReplayChannel>,
    pub min_duration: f64,
    pub max_duration: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    /// Sizes of the ASVspoof 2017 v2.0 partitions.
    fn default() -> Self {
        Self::with_counts([(10, 1507, 1507), (8, 760, 950), (24, 1298, 12008)], 0)
    }
}

impl CorpusSpec {
    /// Contiguous, disjoint speaker ranges from `(speakers, bonafide, spoof)` per split.
    pub fn with_counts(counts: [(u32, usize, usize); 3], seed: u64) -> Self {
        let mut first = 0;
        let splits = counts.map(|(n_speakers, n_bonafide, n_spoof)| {
            let s = SplitSpec {
                first_speaker: first,
                n_speakers,
                n_bonafide,
                n_spoof,
            };
            first += n_speakers;
            s
        });
        Self {
            splits,
            n_phrases: 10,
            replay_channels: ReplayChannel::defaults(),
            min_duration: 1.2,
            max_duration: 3.0,
            seed,
        }
    }

    pub fn split(&self, s: Split) -> &SplitSpec {
        &self.splits[s.index()]
    }

    pub fn split_mut(&mut self, s: Split) -> &mut SplitSpec {
        &mut self.splits[s.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for s in Split::ALL {
            let sp = self.split(s);
            if sp.n_speakers == 0 || sp.n_bonafide == 0 || sp.n_spoof == 0 {
                return Err(Error::InvalidSpec(format!(
                    "{s}: speaker, bonafide and spoof counts must be > 0"
                )));
            }
            if sp.total() > 99_999 {
                return Err(Error::InvalidSpec(format!(
                    "{s}: at most 99999 utterances per split"
                )));
            }
        }
        for (i, a) in Split::ALL.iter().enumerate() {
            for b in &Split::ALL[i + 1..] {
                let (ra, rb) = (self.split(*a).speakers(), self.split(*b).speakers());
                if ra.start < rb.end && rb.start < ra.end {
                    return Err(Error::InvalidSpec(format!(
                        "{a} and {b} speaker ranges overlap"
                    )));
                }
            }
        }
        if self.n_phrases == 0 || self.n_phrases > 99 {
            return Err(Error::InvalidSpec("n_phrases must be in 1..=99".into()));
        }
        if self.replay_channels.is_empty() {
            return Err(Error::InvalidSpec(
                "at least one replay channel is required".into(),
            ));
        }
        for ch in &self.replay_channels {
            ch.validate()?;
        }
        if !(self.min_duration >= 0.2
            && self.max_duration >= self.min_duration
            && self.max_duration <= 30.0)
        {
            return Err(Error::InvalidSpec(
                "durations must satisfy 0.2 <= min <= max <= 30 s".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_disjoint() {
        let s = CorpusSpec::default();
        s.validate().unwrap();
        assert_eq!(s.split(Split::Train).n_bonafide, 1507);
        assert_eq!(s.split(Split::Train).n_spoof, 1507);
        assert_eq!(s.split(Split::Eval).speakers(), 18..42);
    }

    #[test]
    fn rejects_zero_counts() {
        let mut s = CorpusSpec::default();
        s.split_mut(Split::Dev).n_spoof = 0;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn rejects_overlapping_speakers() {
        let mut s = CorpusSpec::default();
        s.split_mut(Split::Eval).first_speaker = 15;
        let err = s.validate().unwrap_err();
        assert!(
            matches!(err, Error::InvalidSpec(ref m) if m.contains("overlap")),
            "{err}"
        );
    }

    #[test]
    fn identity_channel_valid() {
        ReplayChannel::identity().validate().unwrap();
        let mut ch = ReplayChannel::identity();
        ch.cutoff_hz = 9000.0;
        assert!(ch.validate().is_err());
    }
}
