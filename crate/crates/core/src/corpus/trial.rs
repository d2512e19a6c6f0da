use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }

    /// Binary target: 1 for bonafide, 0 for spoof.
    pub fn target(self) -> f64 {
        match self {
            Label::Bonafide => 1.0,
            Label::Spoof => 0.0,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Bonafide => Label::Spoof,
            Label::Spoof => Label::Bonafide,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }

    /// Prefix of generated utterance ids.
    pub fn prefix(self) -> char {
        match self {
            Split::Train => 'T',
            Split::Dev => 'D',
            Split::Eval => 'E',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// One protocol line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrialRecord {
    pub utt_id: String,
    pub label: Label,
    /// 1-based passphrase index.
    pub phrase_id: u16,
    pub split: Split,
    pub attack_id: Option<String>,
}

impl TrialRecord {
    pub fn new(utt_id: impl Into<String>, label: Label, phrase_id: u16, split: Split) -> Self {
        Self {
            utt_id: utt_id.into(),
            label,
            phrase_id,
            split,
            attack_id: None,
        }
    }

    pub fn with_attack(mut self, attack: impl Into<String>) -> Self {
        self.attack_id = Some(attack.into());
        self
    }
}

/// `S01`-style phrase token.
pub fn phrase_token(phrase_id: u16) -> String {
    format!("S{phrase_id:02}")
}

pub fn parse_phrase_token(s: &str) -> Result<u16> {
    let digits = s.strip_prefix('S').unwrap_or(s);
    match digits.parse::<u16>() {
        Ok(p) if p >= 1 => Ok(p),
        _ => Err(Error::InvalidArgument(format!("bad phrase id `{s}`"))),
    }
}
