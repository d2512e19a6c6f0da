//! Joining scores with a protocol, computing EER / min t-DCF, and the
//! text report.

use std::collections::HashMap;
use std::fmt::Write as _;

use spoofvae_core::corpus::{Label, TrialRecord};
use spoofvae_core::metrics::{
    asv_operating_point, compute_det, eer, min_tdcf, synthetic_asv_scores, AsvOperatingPoint,
    AsvScores, DetCurve, TdcfParams,
};
use spoofvae_core::rng;

use crate::config::TdcfCosts;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub eer: f64,
    pub min_tdcf: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
    /// `synthetic(seed)` or the ASV score file name.
    pub asv_source: String,
    pub tdcf: TdcfParams,
    pub det: DetCurve,
}

/// Order `scores` by the protocol, requiring a one-to-one match.
pub fn align(scores: &[(String, f64)], protocol: &[TrialRecord]) -> Result<(Vec<f64>, Vec<Label>)> {
    let by_id: HashMap<&str, f64> = scores.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let mut s = Vec::with_capacity(protocol.len());
    let mut l = Vec::with_capacity(protocol.len());
    for r in protocol {
        let v = by_id
            .get(r.utt_id.as_str())
            .ok_or_else(|| Error::UnknownId {
                id: r.utt_id.clone(),
                what: "the score file".into(),
            })?;
        s.push(*v);
        l.push(r.label);
    }
    if scores.len() != protocol.len() {
        let known: std::collections::HashSet<&str> =
            protocol.iter().map(|r| r.utt_id.as_str()).collect();
        let extra = scores
            .iter()
            .find(|(id, _)| !known.contains(id.as_str()))
            .expect("size mismatch");
        return Err(Error::UnknownId {
            id: extra.0.clone(),
            what: "the protocol".into(),
        });
    }
    Ok((s, l))
}

/// Synthetic ASV scores sized to the evaluation trials.
pub fn default_asv(n_bonafide: usize, n_spoof: usize, seed: u64) -> AsvScores {
    synthetic_asv_scores(
        n_bonafide,
        n_bonafide,
        n_spoof,
        rng::derive_seed(seed, "asv"),
    )
}

pub fn evaluate(
    scores: &[(String, f64)],
    protocol: &[TrialRecord],
    asv: Option<(&AsvScores, String)>,
    costs: &TdcfCosts,
    seed: u64,
) -> Result<Evaluation> {
    let (s, labels) = align(scores, protocol)?;
    let det = compute_det(&s, &labels)?;
    let n_bonafide = labels.iter().filter(|l| **l == Label::Bonafide).count();
    let n_spoof = labels.len() - n_bonafide;
    let synthetic;
    let (asv, asv_source) = match asv {
        Some((a, name)) => (a, name),
        None => {
            synthetic = default_asv(n_bonafide, n_spoof, seed);
            (&synthetic, format!("synthetic({seed})"))
        }
    };
    let op: AsvOperatingPoint = asv_operating_point(&asv.target, &asv.nontarget, &asv.spoof)?;
    let tdcf = costs.with_asv(op);
    Ok(Evaluation {
        eer: eer(&det),
        min_tdcf: min_tdcf(&s, &labels, &tdcf)?,
        n_bonafide,
        n_spoof,
        asv_source,
        tdcf,
        det,
    })
}

impl Evaluation {
    /// `key = value` block.
    pub fn render(&self, header: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in header {
            let _ = writeln!(out, "{k} = {v}");
        }
        let t = &self.tdcf;
        let lines: [(&str, String); 17] = [
            ("eer", format!("{:.6}", self.eer)),
            ("min_tdcf", format!("{:.6}", self.min_tdcf)),
            ("trials.bonafide", self.n_bonafide.to_string()),
            ("trials.spoof", self.n_spoof.to_string()),
            ("det.points", self.det.len().to_string()),
            ("asv.source", self.asv_source.clone()),
            ("asv.threshold", format!("{:.6}", t.asv.threshold)),
            ("asv.p_fa", format!("{:.6}", t.asv.p_fa)),
            ("asv.p_miss", format!("{:.6}", t.asv.p_miss)),
            ("asv.p_miss_spoof", format!("{:.6}", t.asv.p_miss_spoof)),
            ("tdcf.c_miss_asv", t.c_miss_asv.to_string()),
            ("tdcf.c_fa_asv", t.c_fa_asv.to_string()),
            ("tdcf.c_miss_cm", t.c_miss_cm.to_string()),
            ("tdcf.c_fa_cm", t.c_fa_cm.to_string()),
            ("tdcf.pi_tar", t.pi_tar.to_string()),
            ("tdcf.pi_non", t.pi_non.to_string()),
            ("tdcf.pi_spoof", t.pi_spoof.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// `threshold p_fa p_miss` per sweep point, for external plotting.
    pub fn det_points(&self) -> String {
        let mut out = String::from("# threshold p_fa p_miss\n");
        for i in 0..self.det.len() {
            let _ = writeln!(
                out,
                "{:.6} {:.6} {:.6}",
                self.det.thresholds[i], self.det.p_fa[i], self.det.p_miss[i]
            );
        }
        out
    }
}

/// Parse a rendered report back into its key/value pairs.
pub fn parse_report(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use spoofvae_core::corpus::Split;

    fn protocol() -> Vec<TrialRecord> {
        (0..6)
            .map(|i| {
                let l = if i < 3 { Label::Bonafide } else { Label::Spoof };
                TrialRecord::new(format!("E_{i}"), l, 1, Split::Eval)
            })
            .collect()
    }

    fn scores(vals: &[f64]) -> Vec<(String, f64)> {
        vals.iter()
            .enumerate()
            .map(|(i, v)| (format!("E_{i}"), *v))
            .collect()
    }

    #[test]
    fn separable_scores() {
        let e = evaluate(
            &scores(&[3.0, 4.0, 5.0, 0.0, 1.0, 2.0]),
            &protocol(),
            None,
            &TdcfCosts::default(),
            1,
        )
        .unwrap();
        assert_eq!(e.eer, 0.0);
        assert_eq!(e.min_tdcf, 0.0);
        assert_eq!((e.n_bonafide, e.n_spoof), (3, 3));
        let kv = parse_report(&e.render(&[("model", "gmm".into())]));
        assert_eq!(kv["eer"], "0.000000");
        assert_eq!(kv["model"], "gmm");
        assert!(e.det_points().lines().count() > 2);
    }

    #[test]
    fn constant_scores_are_uninformative() {
        let e = evaluate(
            &scores(&[1.0; 6]),
            &protocol(),
            None,
            &TdcfCosts::default(),
            1,
        )
        .unwrap();
        assert!((e.min_tdcf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_or_extra_ids() {
        let mut s = scores(&[1.0; 6]);
        s.pop();
        assert!(evaluate(&s, &protocol(), None, &TdcfCosts::default(), 1)
            .unwrap_err()
            .to_string()
            .contains("E_5"));
        let mut s = scores(&[1.0; 6]);
        s.push(("X".into(), 0.0));
        let err = evaluate(&s, &protocol(), None, &TdcfCosts::default(), 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("`X`"), "{err}");
    }

    #[test]
    fn explicit_asv_scores() {
        let asv = AsvScores {
            target: vec![2.0, 3.0],
            nontarget: vec![0.0, 1.0],
            spoof: vec![0.0, 2.5],
        };
        let e = evaluate(
            &scores(&[3.0, 4.0, 5.0, 0.0, 1.0, 2.0]),
            &protocol(),
            Some((&asv, "asv.txt".into())),
            &TdcfCosts::default(),
            1,
        )
        .unwrap();
        assert_eq!(e.asv_source, "asv.txt");
        assert_eq!(
            (e.tdcf.asv.p_fa, e.tdcf.asv.p_miss, e.tdcf.asv.p_miss_spoof),
            (0.0, 0.0, 0.5)
        );
    }
}
