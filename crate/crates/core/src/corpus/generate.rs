use alloc::format;
use alloc::vec::Vec;

use super::spec::CorpusSpec;
use super::synth::{synth_bonafide, synth_replay, PhraseTemplate, Speaker};
use super::trial::{Label, Split, TrialRecord};
use super::waveform::Waveform;
use crate::error::Result;
use crate::rng;

/// A protocol entry plus the hidden synthesis parameters behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedUtterance {
    pub record: TrialRecord,
    pub speaker: u32,
    /// Index into `CorpusSpec::replay_channels` for spoof items.
    pub channel: Option<usize>,
}

impl PlannedUtterance {
    pub fn synthesize(&self, spec: &CorpusSpec) -> Result<Waveform> {
        let phrase = PhraseTemplate::for_phrase(self.record.phrase_id);
        let speaker = Speaker::new(spec.seed, self.speaker);
        let utt_seed = rng::derive_seed(spec.seed, &self.record.utt_id);
        let mut r = rng::stream(utt_seed, "source");
        let source = synth_bonafide(
            &phrase,
            &speaker,
            spec.min_duration,
            spec.max_duration,
            &mut r,
        )?;
        match self.channel {
            None => Ok(source),
            Some(c) => synth_replay(&source, &spec.replay_channels[c], utt_seed),
        }
    }
}

/// Protocol layout of a corpus without rendering any audio.
pub fn plan_corpus(spec: &CorpusSpec) -> Result<Vec<PlannedUtterance>> {
    spec.validate()?;
    let mut out = Vec::new();
    for split in Split::ALL {
        let s = spec.split(split);
        for i in 0..s.total() {
            let label = if i < s.n_bonafide {
                Label::Bonafide
            } else {
                Label::Spoof
            };
            let j = if label == Label::Bonafide {
                i
            } else {
                i - s.n_bonafide
            };
            let speaker = s.first_speaker + (j as u32 % s.n_speakers);
            let phrase = (j / s.n_speakers as usize) % spec.n_phrases as usize + 1;
            let utt_id = format!("{}_{:04}", split.prefix(), i + 1);
            let mut record = TrialRecord::new(utt_id, label, phrase as u16, split);
            let channel = (label == Label::Spoof).then(|| j % spec.replay_channels.len());
            if let Some(c) = channel {
                record = record.with_attack(spec.replay_channels[c].name.clone());
            }
            out.push(PlannedUtterance {
                record,
                speaker,
                channel,
            });
        }
    }
    Ok(out)
}

/// Fully rendered corpus, in protocol order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub items: Vec<(TrialRecord, Waveform)>,
}

impl Corpus {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &(TrialRecord, Waveform)> {
        self.items.iter().filter(move |(r, _)| r.split == s)
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    let items = plan_corpus(spec)?
        .into_iter()
        .map(|p| p.synthesize(spec).map(|w| (p.record, w)))
        .collect::<Result<_>>()?;
    Ok(Corpus { items })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> CorpusSpec {
        let mut s = CorpusSpec::with_counts([(2, 3, 3), (2, 2, 2), (2, 2, 3)], seed);
        s.min_duration = 0.5;
        s.max_duration = 0.6;
        s
    }

    #[test]
    fn default_counts() {
        let plan = plan_corpus(&CorpusSpec::default()).unwrap();
        let count = |sp, l| {
            plan.iter()
                .filter(|p| p.record.split == sp && p.record.label == l)
                .count()
        };
        assert_eq!(count(Split::Train, Label::Bonafide), 1507);
        assert_eq!(count(Split::Train, Label::Spoof), 1507);
        assert_eq!(count(Split::Eval, Label::Spoof), 12008);
    }

    #[test]
    fn ids_unique_and_speakers_disjoint() {
        let spec = CorpusSpec::default();
        let plan = plan_corpus(&spec).unwrap();
        let mut ids: Vec<_> = plan.iter().map(|p| p.record.utt_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), plan.len());
        for p in &plan {
            assert!(spec.split(p.record.split).speakers().contains(&p.speaker));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_corpus(&tiny(1)).unwrap();
        let b = generate_corpus(&tiny(1)).unwrap();
        let c = generate_corpus(&tiny(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.items.len(), c.items.len());
        assert_ne!(a.items[0].1, c.items[0].1);
    }

    #[test]
    fn spoofs_carry_attack_ids() {
        let plan = plan_corpus(&tiny(0)).unwrap();
        for p in plan {
            assert_eq!(p.record.attack_id.is_some(), p.record.label == Label::Spoof);
        }
    }
}
