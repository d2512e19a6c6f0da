//! Synthetic replay corpus.
//!
//! Bonafide items are harmonic, formant-shaped syllable sequences driven by a
//! per-phrase template and a per-speaker perturbation. Spoof items are fresh
//! bonafide renderings passed through a [`ReplayChannel`]. Every utterance is
//! seeded from the corpus seed and its id, so any subset can be regenerated
//! independently of the others.

mod generate;
mod spec;
mod synth;
mod trial;
mod waveform;

pub use generate::{generate_corpus, plan_corpus, Corpus, PlannedUtterance};
pub use spec::{CorpusSpec, ReplayChannel, SplitSpec};
pub use synth::{lowpass_kernel, synth_bonafide, synth_replay, PhraseTemplate, Speaker};
pub use trial::{parse_phrase_token, phrase_token, Label, Split, TrialRecord};
pub use waveform::{Waveform, SAMPLE_RATE};
