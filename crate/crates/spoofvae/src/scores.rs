//! Score files (`utt_id score`) and ASV score files (`id key score`).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use spoofvae_core::metrics::AsvScores;

use crate::error::{Error, Result};
use crate::fsx;

/// Decimal places written for every score.
pub const SCORE_DECIMALS: usize = 6;

pub fn format_scores(pairs: &[(String, f64)]) -> String {
    let mut out = String::with_capacity(pairs.len() * 24);
    for (id, s) in pairs {
        let _ = writeln!(out, "{id} {s:.SCORE_DECIMALS$}");
    }
    out
}

pub fn write_scores(path: &Path, pairs: &[(String, f64)]) -> Result<()> {
    fsx::write_bytes(path, format_scores(pairs).as_bytes())
}

pub fn parse_scores(text: &str, path: &Path) -> Result<Vec<(String, f64)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let id = it.next().expect("nonempty line");
        let score = match (it.next(), it.next()) {
            (Some(s), None) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad score `{s}`")))?,
            (None, _) => return Err(Error::parse(path, i + 1, "missing score field")),
            (Some(_), Some(_)) => return Err(Error::parse(path, i + 1, "expected `utt_id score`")),
        };
        if !seen.insert(id) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: id.to_string(),
            });
        }
        out.push((id.to_string(), score));
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    parse_scores(&fsx::read_text(path)?, path)
}

/// ASV scores with a `target`, `nontarget` or `spoof` key per line.
pub fn parse_asv_scores(text: &str, path: &Path) -> Result<AsvScores> {
    let mut s = AsvScores {
        target: Vec::new(),
        nontarget: Vec::new(),
        spoof: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [_, key, score] = fields[..] else {
            return Err(Error::parse(path, i + 1, "expected `id key score`"));
        };
        let v = score
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(path, i + 1, format!("bad score `{score}`")))?;
        match key {
            "target" => s.target.push(v),
            "nontarget" => s.nontarget.push(v),
            "spoof" => s.spoof.push(v),
            other => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("unknown ASV key `{other}`"),
                ))
            }
        }
    }
    Ok(s)
}

pub fn read_asv_scores(path: &Path) -> Result<AsvScores> {
    parse_asv_scores(&fsx::read_text(path)?, path)
}

pub fn format_asv_scores(s: &AsvScores) -> String {
    let mut out = String::new();
    for (key, v) in [
        ("target", &s.target),
        ("nontarget", &s.nontarget),
        ("spoof", &s.spoof),
    ] {
        for (i, x) in v.iter().enumerate() {
            let _ = writeln!(out, "{key}_{i:05} {key} {x:.SCORE_DECIMALS$}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("scores.txt")
    }

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec(-1e4f64..1e4, 100)) {
            let pairs: Vec<(String, f64)> = values.iter().enumerate().map(|(i, v)| (format!("E_{i:04}"), *v)).collect();
            let back = parse_scores(&format_scores(&pairs), p()).unwrap();
            prop_assert_eq!(back.len(), pairs.len());
            for ((a, x), (b, y)) in back.iter().zip(&pairs) {
                prop_assert_eq!(a, b);
                prop_assert!((x - y).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn six_decimals() {
        assert_eq!(format_scores(&[("a".into(), 1.0 / 3.0)]), "a 0.333333\n");
    }

    #[test]
    fn duplicate_names_id() {
        let err = parse_scores("a 1\nb 2\na 3\n", p()).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn missing_score_names_line() {
        let err = parse_scores("a 1\nb\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_scores("a nan\n", p()).is_err());
    }

    #[test]
    fn asv_roundtrip() {
        let s = AsvScores {
            target: vec![2.0, 2.5],
            nontarget: vec![0.0],
            spoof: vec![1.25],
        };
        assert_eq!(parse_asv_scores(&format_asv_scores(&s), p()).unwrap(), s);
        assert!(parse_asv_scores("x impostor 1\n", p()).is_err());
    }
}
