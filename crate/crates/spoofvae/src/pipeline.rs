//! The end-to-end `run`: corpus, features, every configured back-end,
//! optional residual CNN, reports and manifest.

use std::path::PathBuf;

use log::info;
use spoofvae_core::corpus::{Split, TrialRecord};
use spoofvae_core::features::{FeatureKind, FeatureMatrix};
use spoofvae_core::vae::Variant;

use crate::cache::FeatureCache;
use crate::config::{CorpusSource, ExperimentConfig, ModelKind};
use crate::error::{Error, Result, Stage, StageExt};
use crate::fsx;
use crate::lock::RunLock;
use crate::manifest::{sha256_hex, Manifest};
use crate::models::Detector;
use crate::protocol::read_protocol;
use crate::report::{evaluate, Evaluation};
use crate::scores::{read_asv_scores, write_scores};
use crate::stages::{self, History, Labelled};

/// Name under which the residual CNN is reported.
pub const RESIDUAL_CNN: &str = "cnn-residual";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// `(model name, evaluation on eval)` in training order.
    pub evaluations: Vec<(String, Evaluation)>,
    pub histories: Vec<(String, History)>,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn evaluation(&self, name: &str) -> Option<&Evaluation> {
        self.evaluations
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
    }

    pub fn history(&self, name: &str) -> Option<&History> {
        self.histories
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, h)| h)
    }
}

/// Where the run's files go.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn model(&self, name: &str) -> PathBuf {
        self.out.join("models").join(format!("{name}.ckpt"))
    }
    pub fn log(&self, name: &str) -> PathBuf {
        self.out.join("logs").join(format!("{name}.txt"))
    }
    pub fn scores(&self, name: &str) -> PathBuf {
        self.out.join("scores").join(format!("{name}.txt"))
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.out.join("reports").join(format!("{name}.txt"))
    }
    pub fn det(&self, name: &str) -> PathBuf {
        self.out.join("reports").join(format!("{name}.det.txt"))
    }
    pub fn residuals(&self, split: Split) -> PathBuf {
        self.out.join("residuals").join(split.as_str())
    }
}

/// Protocols, audio location and a fingerprint of both.
struct Corpus {
    audio: PathBuf,
    records: [Vec<TrialRecord>; 3],
    fingerprint: String,
}

fn short_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())[..16].to_string()
}

fn prepare_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let (audio, protocols, fingerprint) = match &cfg.corpus {
        CorpusSource::Generate(spec) => {
            spec.validate()?;
            let fp = short_hash(&format!("{spec:?} {:?}", cfg.limits));
            let root = cfg.cache.join(format!("corpus-{fp}"));
            if !root.join(stages::COMPLETE_MARK).exists() {
                if root.exists() {
                    std::fs::remove_dir_all(&root).map_err(|e| Error::io(&root, e))?;
                }
                info!("generating corpus into {}", root.display());
                stages::generate_corpus(spec, cfg.limits, &root)?;
            }
            (
                stages::audio_dir(&root),
                Split::ALL.map(|s| stages::protocol_path(&root, s)),
                fp,
            )
        }
        CorpusSource::Ingest { audio, protocols } => {
            let mut text = format!("{} {:?}", audio.display(), cfg.limits);
            for p in protocols {
                text.push_str(&fsx::read_text(p)?);
            }
            (audio.clone(), protocols.clone(), short_hash(&text))
        }
    };
    let mut records = stages::read_corpus_protocols(&protocols)?;
    for split in Split::ALL {
        let r = &mut records[split.index()];
        *r = stages::subsample(r, |t| t.label, cfg.limits[split.index()]);
        if r.is_empty() {
            return Err(Error::Config(format!("the {split} split is empty")));
        }
    }
    Ok(Corpus {
        audio,
        records,
        fingerprint,
    })
}

fn features_for(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<[Vec<FeatureMatrix>; 3]> {
    let kind = cfg.features;
    let fp = short_hash(&format!(
        "{} {kind} {}",
        corpus.fingerprint, cfg.hyper.frames
    ));
    let root = cfg.cache.join(format!("features-{kind}-{fp}"));
    let mut out: [Vec<FeatureMatrix>; 3] = Default::default();
    for split in Split::ALL {
        let dir = root.join(split.as_str());
        let records = &corpus.records[split.index()];
        let cache = match FeatureCache::exists(&dir) {
            true => FeatureCache::open(&dir)?,
            false => {
                info!("extracting {kind} features for {split}");
                stages::extract_features(kind, cfg.hyper.frames, &corpus.audio, records, &dir)?
            }
        };
        out[split.index()] = cache.load(records, kind)?;
    }
    Ok(out)
}

/// Score eval, write scores and report for `name`.
fn score_and_report(
    cfg: &ExperimentConfig,
    layout: &Layout,
    name: &str,
    det: &Detector,
    eval: Labelled<'_>,
) -> Result<Evaluation> {
    let scores = stages::score(det, eval, cfg.hyper.estimator).stage(Stage::Score)?;
    write_scores(&layout.scores(name), &scores).stage(Stage::Score)?;
    let asv = match &cfg.asv_scores {
        Some(p) => Some((
            read_asv_scores(p).stage(Stage::Evaluate)?,
            p.display().to_string(),
        )),
        None => None,
    };
    let ev = evaluate(
        &scores,
        eval.records,
        asv.as_ref().map(|(a, n)| (a, n.clone())),
        &cfg.tdcf,
        cfg.seed,
    )
    .stage(Stage::Evaluate)?;
    let header = [
        ("model", name.to_string()),
        ("features", det.features().to_string()),
    ];
    fsx::write_bytes(&layout.report(name), ev.render(&header).as_bytes()).stage(Stage::Evaluate)?;
    fsx::write_bytes(&layout.det(name), ev.det_points().as_bytes()).stage(Stage::Evaluate)?;
    info!("{name}: EER {:.4}, min t-DCF {:.4}", ev.eer, ev.min_tdcf);
    Ok(ev)
}

fn train_model(
    cfg: &ExperimentConfig,
    kind: FeatureKind,
    model: ModelKind,
    train: Labelled<'_>,
    dev: Labelled<'_>,
) -> Result<(Detector, History)> {
    match model {
        ModelKind::Gmm => Ok((
            stages::train_gmm(kind, train, None, &cfg.hyper)?,
            History { runs: Vec::new() },
        )),
        ModelKind::Vae(v) => stages::train_vae_detector(kind, v, &cfg.hyper, train, dev),
        ModelKind::Cnn => stages::train_cnn_detector(kind, &cfg.hyper, train, dev),
    }
}

/// Execute the full experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let _lock = RunLock::acquire(&cfg.out).stage(Stage::Config)?;
    let layout = Layout {
        out: cfg.out.clone(),
    };
    let corpus = prepare_corpus(cfg).stage(Stage::Corpus)?;
    let feats = features_for(cfg, &corpus).stage(Stage::Features)?;
    let view = |s: Split| Labelled::new(&feats[s.index()], &corpus.records[s.index()]);
    let (train, dev, eval) = (view(Split::Train), view(Split::Dev), view(Split::Eval));

    let mut evaluations = Vec::new();
    let mut histories = Vec::new();
    let mut vaes: Vec<(Variant, Detector)> = Vec::new();
    for &model in &cfg.models {
        let name = model.as_str();
        info!("training {name}");
        let (det, history) =
            train_model(cfg, cfg.features, model, train, dev).stage(Stage::Train)?;
        det.save(&layout.model(name)).stage(Stage::Train)?;
        fsx::write_bytes(&layout.log(name), history.render().as_bytes()).stage(Stage::Train)?;
        evaluations.push((
            name.to_string(),
            score_and_report(cfg, &layout, name, &det, eval)?,
        ));
        histories.push((name.to_string(), history));
        if let ModelKind::Vae(v) = model {
            vaes.push((v, det));
        }
    }

    if let Some(variant) = cfg.residual {
        let det = &vaes
            .iter()
            .find(|(v, _)| *v == variant)
            .expect("validated in config")
            .1;
        let (ev, history) = residual_stage(cfg, &layout, det, [train, dev, eval])?;
        evaluations.push((RESIDUAL_CNN.to_string(), ev));
        histories.push((RESIDUAL_CNN.to_string(), history));
    }

    let manifest = write_manifest(cfg, &corpus).stage(Stage::Manifest)?;
    Ok(RunOutcome {
        evaluations,
        histories,
        manifest,
    })
}

/// Residual CNN from the already trained `cfg.residual` checkpoint in
/// `cfg.out`.
pub fn residual_pipeline(cfg: &ExperimentConfig) -> Result<(Evaluation, History)> {
    let variant = cfg
        .residual
        .ok_or_else(|| Error::Config("`residual` names no VAE".into()))
        .stage(Stage::Config)?;
    let _lock = RunLock::acquire(&cfg.out).stage(Stage::Config)?;
    let layout = Layout {
        out: cfg.out.clone(),
    };
    let ckpt = layout.model(variant.as_str());
    if !ckpt.exists() {
        return Err(Error::Config(format!(
            "missing checkpoint {}",
            ckpt.display()
        )))
        .stage(Stage::Residuals);
    }
    let det = Detector::load(&ckpt).stage(Stage::Residuals)?;
    let corpus = prepare_corpus(cfg).stage(Stage::Corpus)?;
    let feats = features_for(cfg, &corpus).stage(Stage::Features)?;
    let views = Split::ALL.map(|s| Labelled::new(&feats[s.index()], &corpus.records[s.index()]));
    residual_stage(cfg, &layout, &det, views)
}

fn residual_stage(
    cfg: &ExperimentConfig,
    layout: &Layout,
    det: &Detector,
    splits: [Labelled<'_>; 3],
) -> Result<(Evaluation, History)> {
    let sys = det
        .as_vae()
        .ok_or_else(|| Error::Config("residuals need a VAE".into()))
        .stage(Stage::Residuals)?;
    let mut res: [Vec<FeatureMatrix>; 3] = Default::default();
    for split in Split::ALL {
        let data = splits[split.index()];
        let cache = stages::write_residual_cache(sys, data, &layout.residuals(split))
            .stage(Stage::Residuals)?;
        res[split.index()] = cache
            .load(data.records, sys.config().feature_kind.residual())
            .stage(Stage::Residuals)?;
    }
    let view = |s: Split| Labelled::new(&res[s.index()], splits[s.index()].records);
    let kind = sys.config().feature_kind.residual();
    let (cnn, history) =
        stages::train_cnn_detector(kind, &cfg.hyper, view(Split::Train), view(Split::Dev))
            .stage(Stage::Train)?;
    cnn.save(&layout.model(RESIDUAL_CNN)).stage(Stage::Train)?;
    fsx::write_bytes(&layout.log(RESIDUAL_CNN), history.render().as_bytes()).stage(Stage::Train)?;
    let ev = score_and_report(cfg, layout, RESIDUAL_CNN, &cnn, view(Split::Eval))?;
    Ok((ev, history))
}

fn write_manifest(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Manifest> {
    let mut m = Manifest::default();
    m.set("seed", cfg.seed);
    m.set("corpus.fingerprint", &corpus.fingerprint);
    for split in Split::ALL {
        m.set(
            format!("trials.{split}"),
            corpus.records[split.index()].len(),
        );
    }
    // Output locations do not change any artifact.
    for key in cfg
        .source
        .keys()
        .filter(|k| !matches!(*k, "out" | "cache_dir"))
    {
        m.set(
            format!("config.{key}"),
            cfg.source.get(key).unwrap_or_default(),
        );
    }
    for model in &cfg.models {
        if let ModelKind::Vae(v) = model {
            m.set(
                format!("model.{model}.cond_dim"),
                cfg.hyper.vae_config(cfg.features, *v)?.cond_dim,
            );
        }
    }
    let exclude = if cfg.cache.starts_with(&cfg.out) {
        vec![cfg.cache.clone()]
    } else {
        Vec::new()
    };
    m.collect(&cfg.out, &exclude)?;
    m.write(&cfg.out)?;
    Ok(m)
}

/// Read protocols whose split is given by the file name.
pub fn load_protocols(paths: &[PathBuf]) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let split = crate::protocol::split_from_path(p).ok_or_else(|| {
            Error::Config(format!(
                "cannot tell the split of {}; name it train/dev/eval.txt",
                p.display()
            ))
        })?;
        out.extend(read_protocol(p, split)?);
    }
    Ok(out)
}
