//! Protocol files: one `utt_id label S01 [attack_id]` trial per line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use spoofvae_core::corpus::{parse_phrase_token, phrase_token, Label, Split, TrialRecord};

use crate::error::{Error, Result};
use crate::fsx;

pub fn format_protocol(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(
            out,
            "{} {} {}",
            r.utt_id,
            r.label,
            phrase_token(r.phrase_id)
        );
        if let Some(a) = &r.attack_id {
            let _ = write!(out, " {a}");
        }
        out.push('\n');
    }
    out
}

pub fn write_protocol(path: &Path, records: &[TrialRecord]) -> Result<()> {
    fsx::write_bytes(path, format_protocol(records).as_bytes())
}

/// Parse protocol text; `path` only labels diagnostics. Blank lines and
/// `#` comments are skipped.
pub fn parse_protocol(text: &str, split: Split, path: &Path) -> Result<Vec<TrialRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::parse(path, i + 1, msg);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!(
                "expected `utt_id label phrase [attack]`, got {} fields",
                fields.len()
            )));
        }
        let label: Label = fields[1]
            .parse()
            .map_err(|e: spoofvae_core::Error| err(e.to_string()))?;
        let phrase = parse_phrase_token(fields[2]).map_err(|e| err(e.to_string()))?;
        if !seen.insert(fields[0]) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: fields[0].to_string(),
            });
        }
        let mut r = TrialRecord::new(fields[0], label, phrase, split);
        if let Some(a) = fields.get(3) {
            r = r.with_attack(*a);
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_protocol(path: &Path, split: Split) -> Result<Vec<TrialRecord>> {
    parse_protocol(&fsx::read_text(path)?, split, path)
}

/// The split named by a protocol file stem (`train.txt`, `dev.txt`, ...).
pub fn split_from_path(path: &Path) -> Option<Split> {
    path.file_stem()?.to_str()?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("proto.txt")
    }

    #[test]
    fn single_line() {
        let r = parse_protocol("T_0001 bonafide S01\n", Split::Train, p()).unwrap();
        assert_eq!(
            r,
            vec![TrialRecord::new("T_0001", Label::Bonafide, 1, Split::Train)]
        );
    }

    #[test]
    fn attack_field() {
        let r = parse_protocol("E_0003 spoof S10 R2\n", Split::Eval, p()).unwrap();
        assert_eq!(r[0].attack_id.as_deref(), Some("R2"));
        assert_eq!(r[0].phrase_id, 10);
    }

    #[test]
    fn unknown_label_names_line() {
        let err = parse_protocol("T_0002 genuine S01\n", Split::Train, p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("genuine"));
    }

    #[test]
    fn malformed_lines() {
        let err = parse_protocol("T_1 bonafide S01\nT_2 spoof\n", Split::Train, p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_protocol("T_1 bonafide X\n", Split::Train, p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn duplicate_id() {
        let err =
            parse_protocol("T_1 bonafide S01\nT_1 spoof S01\n", Split::Train, p()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { ref id, .. } if id == "T_1"));
    }

    #[test]
    fn split_from_stem() {
        assert_eq!(split_from_path(Path::new("a/dev.txt")), Some(Split::Dev));
        assert_eq!(split_from_path(Path::new("a/other.txt")), None);
    }

    fn record() -> impl Strategy<Value = (u16, bool, u16, Option<u8>)> {
        (
            0u16..9999,
            any::<bool>(),
            1u16..=20,
            proptest::option::of(0u8..5),
        )
    }

    proptest! {
        #[test]
        fn roundtrip(raw in proptest::collection::vec(record(), 1..1000)) {
            let mut seen = HashSet::new();
            let records: Vec<TrialRecord> = raw
                .into_iter()
                .filter(|(id, ..)| seen.insert(*id))
                .map(|(id, bona, phrase, attack)| {
                    let label = if bona { Label::Bonafide } else { Label::Spoof };
                    let r = TrialRecord::new(format!("D_{id:04}"), label, phrase, Split::Dev);
                    match attack {
                        Some(a) => r.with_attack(format!("R{a}")),
                        None => r,
                    }
                })
                .collect();
            let text = format_protocol(&records);
            prop_assert_eq!(parse_protocol(&text, Split::Dev, p()).unwrap(), records);
        }
    }
}
