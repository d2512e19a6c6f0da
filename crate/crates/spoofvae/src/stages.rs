//! The individual pipeline stages, shared by `run` and the single-stage
//! subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use spoofvae_core::cnn::{CnnConfig, CnnModel, CnnSession};
use spoofvae_core::corpus::{plan_corpus, CorpusSpec, Label, PlannedUtterance, Split, TrialRecord};
use spoofvae_core::features::{FeatureKind, FeatureMatrix, Frontend};
use spoofvae_core::gmm::{em_fit, pool_frames, EmConfig};
use spoofvae_core::rng;
use spoofvae_core::train::{fit, Dataset, EpochStats, TrainReport};
use spoofvae_core::vae::{conditioning, train_vae, Estimator, VaeSystem, Variant};

use crate::cache::{FeatureCache, FeatureCacheWriter};
use crate::config::Hyper;
use crate::error::{Error, Result};
use crate::fsx;
use crate::models::{stack, Detector, GmmPair, SCORE_BATCH};
use crate::protocol::{read_protocol, write_protocol};
use crate::wav::{read_wav, write_wav};

/// Written last into a generated corpus directory.
pub const COMPLETE_MARK: &str = "COMPLETE";

pub fn audio_dir(root: &Path) -> PathBuf {
    root.join("wav")
}

pub fn protocol_path(root: &Path, split: Split) -> PathBuf {
    root.join("protocol").join(format!("{split}.txt"))
}

pub fn wav_path(audio: &Path, utt_id: &str) -> PathBuf {
    audio.join(format!("{utt_id}.wav"))
}

/// The first `ceil(limit / 2)` bonafide and `floor(limit / 2)` spoof
/// trials, in protocol order. A limit of 0 keeps everything.
pub fn subsample<T: Clone>(items: &[T], label: impl Fn(&T) -> Label, limit: usize) -> Vec<T> {
    if limit == 0 {
        return items.to_vec();
    }
    let (mut nb, mut ns) = (limit.div_ceil(2), limit / 2);
    items
        .iter()
        .filter(|it| {
            let slot = if label(it) == Label::Bonafide {
                &mut nb
            } else {
                &mut ns
            };
            let keep = *slot > 0;
            *slot = slot.saturating_sub(1);
            keep
        })
        .cloned()
        .collect()
}

/// Render `plan` into `root`: `wav/<utt_id>.wav` plus `protocol/<split>.txt`.
pub fn write_corpus(spec: &CorpusSpec, plan: &[PlannedUtterance], root: &Path) -> Result<()> {
    let audio = audio_dir(root);
    fsx::create_dir(&audio)?;
    for split in Split::ALL {
        let records: Vec<TrialRecord> = plan
            .iter()
            .filter(|p| p.record.split == split)
            .map(|p| p.record.clone())
            .collect();
        write_protocol(&protocol_path(root, split), &records)?;
    }
    for (i, p) in plan.iter().enumerate() {
        write_wav(&wav_path(&audio, &p.record.utt_id), &p.synthesize(spec)?)?;
        if (i + 1) % 1000 == 0 {
            info!("synthesised {}/{} utterances", i + 1, plan.len());
        }
    }
    fsx::write_bytes(&root.join(COMPLETE_MARK), b"")
}

/// Plan `spec`, keep up to `limits[split]` utterances per split, and write.
pub fn generate_corpus(spec: &CorpusSpec, limits: [usize; 3], root: &Path) -> Result<()> {
    let plan = plan_corpus(spec)?;
    let mut kept = Vec::new();
    for split in Split::ALL {
        let part: Vec<PlannedUtterance> = plan
            .iter()
            .filter(|p| p.record.split == split)
            .cloned()
            .collect();
        kept.extend(subsample(&part, |p| p.record.label, limits[split.index()]));
    }
    write_corpus(spec, &kept, root)
}

/// Protocols of the three splits under `root`.
pub fn read_corpus_protocols(paths: &[PathBuf; 3]) -> Result<[Vec<TrialRecord>; 3]> {
    let [a, b, c] = paths;
    Ok([
        read_protocol(a, Split::Train)?,
        read_protocol(b, Split::Dev)?,
        read_protocol(c, Split::Eval)?,
    ])
}

/// Extract `kind` features for `records` from `audio` into a cache at `out`.
pub fn extract_features(
    kind: FeatureKind,
    frames: usize,
    audio: &Path,
    records: &[TrialRecord],
    out: &Path,
) -> Result<FeatureCache> {
    let fe = Frontend::new(kind)?.with_frames(frames);
    let mut w = FeatureCacheWriter::new(out);
    for (i, r) in records.iter().enumerate() {
        let path = wav_path(audio, &r.utt_id);
        let m = fe
            .process(&read_wav(&path)?)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        w.push(&r.utt_id, &m)?;
        if (i + 1) % 1000 == 0 {
            info!(
                "extracted {kind} features for {}/{} utterances",
                i + 1,
                records.len()
            );
        }
    }
    w.finish()?;
    FeatureCache::open(out)
}

/// Features with their protocol entries.
#[derive(Debug, Clone, Copy)]
pub struct Labelled<'a> {
    pub feats: &'a [FeatureMatrix],
    pub records: &'a [TrialRecord],
}

impl<'a> Labelled<'a> {
    pub fn new(feats: &'a [FeatureMatrix], records: &'a [TrialRecord]) -> Self {
        assert_eq!(feats.len(), records.len());
        Self { feats, records }
    }

    pub fn phrases(&self) -> Vec<u16> {
        self.records.iter().map(|r| r.phrase_id).collect()
    }

    pub fn class(&self, label: Label) -> impl Iterator<Item = &'a FeatureMatrix> {
        self.feats
            .iter()
            .zip(self.records)
            .filter(move |(_, r)| r.label == label)
            .map(|(m, _)| m)
    }

    pub fn dataset(&self, cond_dim: usize) -> Result<Dataset> {
        let (t, d) = self
            .feats
            .first()
            .map(|m| (m.frames(), m.dims()))
            .ok_or_else(|| Error::Config("empty dataset".into()))?;
        let mut ds = Dataset::new(t, d, cond_dim);
        for (m, r) in self.feats.iter().zip(self.records) {
            ds.push(
                m,
                &conditioning(r.label, r.phrase_id, cond_dim)?,
                r.label.target(),
            )?;
        }
        Ok(ds)
    }
}

/// Per-class training histories of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    /// `(tag, epochs, best_epoch, stopped_early)` per trained network.
    pub runs: Vec<(String, Vec<EpochStats>, usize, bool)>,
}

impl History {
    fn from_reports<S>(tags: &[&str], reports: &[TrainReport<S>]) -> Self {
        Self {
            runs: tags
                .iter()
                .zip(reports)
                .map(|(t, r)| {
                    (
                        t.to_string(),
                        r.history.clone(),
                        r.best_epoch,
                        r.stopped_early,
                    )
                })
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (tag, epochs, best, stopped) in &self.runs {
            let _ = writeln!(
                out,
                "# {tag}: best_epoch = {best}, stopped_early = {stopped}"
            );
            let _ = writeln!(out, "# epoch train_loss dev_loss");
            for e in epochs {
                let _ = writeln!(out, "{} {:.6} {:.6}", e.epoch, e.train_loss, e.dev_loss);
            }
        }
        out
    }
}

pub fn train_gmm(
    kind: FeatureKind,
    train: Labelled<'_>,
    class: Option<Label>,
    hyper: &Hyper,
) -> Result<Detector> {
    let mut pair = GmmPair {
        features: kind,
        bonafide: None,
        spoof: None,
    };
    for label in [Label::Bonafide, Label::Spoof] {
        if class.is_some_and(|c| c != label) {
            continue;
        }
        let (frames, dims) = pool_frames(train.class(label));
        if frames.is_empty() {
            return Err(spoofvae_core::Error::EmptyClass(label.as_str()).into());
        }
        let cfg = EmConfig {
            components: hyper.gmm_components,
            iterations: hyper.gmm_iterations,
            seed: rng::derive_seed(hyper.train.seed, &format!("gmm-{label}")),
        };
        let fit = em_fit(&frames, dims, &cfg)?;
        info!(
            "{label} GMM: log-likelihood {:.3} after {} iterations",
            fit.trace.last().unwrap_or(&0.0),
            cfg.iterations
        );
        match label {
            Label::Bonafide => pair.bonafide = Some(fit.model),
            Label::Spoof => pair.spoof = Some(fit.model),
        }
    }
    Ok(Detector::Gmm(pair))
}

pub fn train_vae_detector(
    kind: FeatureKind,
    variant: Variant,
    hyper: &Hyper,
    train: Labelled<'_>,
    dev: Labelled<'_>,
) -> Result<(Detector, History)> {
    let cfg = hyper.vae_config(kind, variant)?;
    let (tr, dv) = (train.dataset(cfg.cond_dim)?, dev.dataset(cfg.cond_dim)?);
    let (sys, reports) = train_vae(cfg, &tr, &dv, &hyper.train)?;
    let tags: &[&str] = if variant == Variant::Naive {
        &["bonafide", "spoof"]
    } else {
        &[variant.as_str()]
    };
    Ok((Detector::Vae(sys), History::from_reports(tags, &reports)))
}

pub fn train_cnn_detector(
    kind: FeatureKind,
    hyper: &Hyper,
    train: Labelled<'_>,
    dev: Labelled<'_>,
) -> Result<(Detector, History)> {
    let (tr, dv) = (train.dataset(0)?, dev.dataset(0)?);
    let first = &train.feats[0];
    let config = CnnConfig::new(first.frames(), first.dims());
    let model = CnnModel::new(config, rng::derive_seed(hyper.cnn_train.seed, "cnn"))?;
    let mut session = CnnSession::new(model, hyper.cnn_train.adam, &tr, &dv)?;
    let report = fit(&mut session, &hyper.cnn_train)?;
    let history = History::from_reports(&["cnn"], std::slice::from_ref(&report));
    Ok((
        Detector::Cnn {
            features: kind,
            model: report.best,
        },
        history,
    ))
}

pub fn score(det: &Detector, data: Labelled<'_>, est: Estimator) -> Result<Vec<(String, f64)>> {
    let s = det.score(data.feats, &data.phrases(), est)?;
    Ok(data
        .records
        .iter()
        .map(|r| r.utt_id.clone())
        .zip(s)
        .collect())
}

/// `|x - mu_x|` under bonafide conditioning, one matrix per utterance.
pub fn residuals(sys: &VaeSystem<f32>, data: Labelled<'_>) -> Result<Vec<FeatureMatrix>> {
    let kind = sys.config().feature_kind;
    let mut out = Vec::with_capacity(data.feats.len());
    for (ms, rs) in data
        .feats
        .chunks(SCORE_BATCH)
        .zip(data.records.chunks(SCORE_BATCH))
    {
        if let Some(m) = ms.iter().find(|m| m.kind() != kind) {
            return Err(Error::Config(format!(
                "residuals need {kind} features, got {}",
                m.kind()
            )));
        }
        let phrases: Vec<u16> = rs.iter().map(|r| r.phrase_id).collect();
        let r = sys.residuals(&stack(ms)?, &phrases)?;
        let per = r.len() / ms.len();
        for (i, m) in ms.iter().enumerate() {
            let v = r.data()[i * per..(i + 1) * per]
                .iter()
                .map(|&x| f64::from(x))
                .collect();
            out.push(FeatureMatrix::new(
                kind.residual(),
                m.frames(),
                m.dims(),
                v,
            )?);
        }
    }
    Ok(out)
}

pub fn write_residual_cache(
    sys: &VaeSystem<f32>,
    data: Labelled<'_>,
    out: &Path,
) -> Result<FeatureCache> {
    let res = residuals(sys, data)?;
    let mut w = FeatureCacheWriter::new(out);
    for (m, r) in res.iter().zip(data.records) {
        w.push(&r.utt_id, m)?;
    }
    w.finish()?;
    FeatureCache::open(out)
}

/// One row per trial: `utt_id mu_1 .. mu_d label phrase`.
pub fn export_latents(sys: &VaeSystem<f32>, data: Labelled<'_>) -> Result<String> {
    let mut out = String::new();
    for (ms, rs) in data
        .feats
        .chunks(SCORE_BATCH)
        .zip(data.records.chunks(SCORE_BATCH))
    {
        let phrases: Vec<u16> = rs.iter().map(|r| r.phrase_id).collect();
        let mu = sys.latents(&stack(ms)?, &phrases)?;
        let d = mu.len() / ms.len();
        for (i, r) in rs.iter().enumerate() {
            out.push_str(&r.utt_id);
            for v in &mu.data()[i * d..(i + 1) * d] {
                let _ = write!(out, " {v:.6}");
            }
            let _ = writeln!(
                out,
                " {} {}",
                r.label,
                spoofvae_core::corpus::phrase_token(r.phrase_id)
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_balances_in_order() {
        let items = [
            Label::Bonafide,
            Label::Bonafide,
            Label::Bonafide,
            Label::Spoof,
            Label::Spoof,
            Label::Spoof,
        ];
        let ids: Vec<usize> = (0..6).collect();
        assert_eq!(subsample(&ids, |i| items[*i], 3), [0, 1, 3]);
        assert_eq!(subsample(&ids, |i| items[*i], 4), [0, 1, 3, 4]);
        assert_eq!(subsample(&ids, |i| items[*i], 0), ids);
        assert_eq!(subsample(&ids, |i| items[*i], 100), ids);
    }
}
