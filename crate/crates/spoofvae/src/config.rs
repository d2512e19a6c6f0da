//! Flat `key = value` configuration files with `include` support, and the
//! experiment configuration built from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spoofvae_core::corpus::{CorpusSpec, ReplayChannel, Split};
use spoofvae_core::diffnum::AdamConfig;
use spoofvae_core::features::{FeatureKind, UNIFIED_FRAMES};
use spoofvae_core::metrics::TdcfParams;
use spoofvae_core::train::TrainConfig;
use spoofvae_core::vae::{Estimator, VaeConfig, Variant};

use crate::error::{Error, Result};
use crate::fsx;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "SPOOFVAE_SEED";
const MAX_INCLUDE_DEPTH: usize = 16;

/// Parsed key/value pairs; later assignments override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    values: BTreeMap<String, (String, PathBuf)>,
}

impl KeyValues {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut kv = Self::default();
        kv.read(path, 0)?;
        Ok(kv)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut kv = Self::default();
        kv.absorb(text, origin, 0)?;
        Ok(kv)
    }

    fn read(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::format(path, "include nesting too deep (cycle?)"));
        }
        let text = fsx::read_text(path)?;
        self.absorb(&text, path, depth)
    }

    fn absorb(&mut self, text: &str, path: &Path, depth: usize) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include ") {
                let target = resolve(path, Path::new(rest.trim()));
                self.read(&target, depth + 1)?;
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, i + 1, "expected `key = value` or `include <file>`")
            })?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::parse(path, i + 1, format!("bad key `{k}`")));
            }
            self.values
                .insert(k.to_string(), (v.trim().to_string(), path.to_path_buf()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values
            .insert(key.to_string(), (value.to_string(), PathBuf::new()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    /// A path value, resolved against the directory of the file that set it.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values
            .get(key)
            .map(|(v, origin)| resolve(origin, Path::new(v)))
    }

    /// Canonical `key = value` listing, used in manifests.
    pub fn render(&self) -> String {
        self.values
            .iter()
            .map(|(k, (v, _))| format!("{k} = {v}\n"))
            .collect()
    }
}

fn resolve(origin: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match origin.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// Corpus spec from `corpus.*` keys over the default sizes.
///
/// `corpus.train = speakers,bonafide,spoof` (likewise `dev`, `eval`);
/// `corpus.channel.<name> = taps.. | cutoff_hz | snr_db | reverb_decay`
/// replaces the default replay channels.
pub fn corpus_spec(kv: &KeyValues, seed: u64) -> Result<CorpusSpec> {
    let mut spec = CorpusSpec {
        seed: kv.parse_or("corpus.seed", seed)?,
        ..CorpusSpec::default()
    };
    for split in Split::ALL {
        let key = format!("corpus.{split}");
        if let Some(v) = kv.get(&key) {
            let n: Vec<&str> = v.split(',').map(str::trim).collect();
            let bad = || {
                Error::Config(format!(
                    "`{key}` must be `speakers,bonafide,spoof`, got `{v}`"
                ))
            };
            let [a, b, c] = n[..] else { return Err(bad()) };
            let s = spec.split_mut(split);
            s.n_speakers = a.parse().map_err(|_| bad())?;
            s.n_bonafide = b.parse().map_err(|_| bad())?;
            s.n_spoof = c.parse().map_err(|_| bad())?;
        }
    }
    let mut first = 0;
    for split in Split::ALL {
        let s = spec.split_mut(split);
        s.first_speaker = first;
        first += s.n_speakers;
    }
    spec.n_phrases = kv.parse_or("corpus.phrases", spec.n_phrases)?;
    spec.min_duration = kv.parse_or("corpus.min_duration", spec.min_duration)?;
    spec.max_duration = kv.parse_or("corpus.max_duration", spec.max_duration)?;
    let channels: Vec<ReplayChannel> = kv
        .keys()
        .filter_map(|k| k.strip_prefix("corpus.channel."))
        .map(|name| parse_channel(name, kv.get(&format!("corpus.channel.{name}")).unwrap()))
        .collect::<Result<_>>()?;
    if !channels.is_empty() {
        spec.replay_channels = channels;
    }
    spec.validate()?;
    Ok(spec)
}

fn parse_channel(name: &str, v: &str) -> Result<ReplayChannel> {
    let bad = || {
        Error::Config(format!(
            "`corpus.channel.{name}` must be `taps.. | cutoff | snr | decay`, got `{v}`"
        ))
    };
    let parts: Vec<&str> = v.split('|').map(str::trim).collect();
    let [taps, cutoff, snr, decay] = parts[..] else {
        return Err(bad());
    };
    let ch = ReplayChannel {
        name: name.to_string(),
        ir_taps: taps
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?,
        cutoff_hz: cutoff.parse().map_err(|_| bad())?,
        snr_db: if snr == "inf" {
            f64::INFINITY
        } else {
            snr.parse().map_err(|_| bad())?
        },
        reverb_decay: decay.parse().map_err(|_| bad())?,
    };
    ch.validate()?;
    Ok(ch)
}

/// A back-end to train in a `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gmm,
    Vae(Variant),
    Cnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gmm => "gmm",
            ModelKind::Vae(v) => v.as_str(),
            ModelKind::Cnn => "cnn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(ModelKind::Gmm),
            "cnn" => Ok(ModelKind::Cnn),
            other => other
                .parse()
                .map(ModelKind::Vae)
                .map_err(|_| Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-size architectures and GMMs.
    Full,
    /// `M = 8`, `d = 32`, `C = 32`.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Generate(CorpusSpec),
    /// Audio directory plus one protocol per split.
    Ingest {
        audio: PathBuf,
        protocols: [PathBuf; 3],
    },
}

/// Model hyperparameters shared by `train` and `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub preset: Preset,
    pub cond_dim: usize,
    pub latent_dim: Option<usize>,
    pub base_channels: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub frames: usize,
    pub gmm_components: usize,
    pub gmm_iterations: usize,
    pub train: TrainConfig,
    pub cnn_train: TrainConfig,
    pub estimator: Estimator,
}

impl Hyper {
    pub fn from_kv(kv: &KeyValues, seed: u64) -> Result<Self> {
        let preset: Preset = kv.parse_or("preset", Preset::Desk)?;
        let train = TrainConfig {
            max_epochs: kv.parse_or("epochs", 300)?,
            patience: kv.parse_or("patience", 10)?,
            batch_size: kv.parse_or("batch", 16)?,
            adam: AdamConfig {
                lr: kv.parse_or("lr", 1e-4)?,
                ..AdamConfig::default()
            },
            seed,
        };
        let cnn_train = TrainConfig {
            max_epochs: kv.parse_or("cnn.epochs", train.max_epochs)?,
            patience: kv.parse_or("cnn.patience", train.patience)?,
            batch_size: kv.parse_or("cnn.batch", train.batch_size)?,
            adam: AdamConfig {
                lr: kv.parse_or("cnn.lr", train.adam.lr)?,
                ..AdamConfig::default()
            },
            seed,
        };
        let samples: usize = kv.parse_or("score.samples", 0)?;
        let h = Self {
            preset,
            cond_dim: kv.parse_or("cond", 2)?,
            latent_dim: kv.parse_opt("latent_dim")?,
            base_channels: kv.parse_opt("base_channels")?,
            alpha: kv.parse_or("alpha", 1.0)?,
            beta: kv.parse_or("beta", 1.0)?,
            frames: kv.parse_or("frames", UNIFIED_FRAMES)?,
            gmm_components: kv.parse_or(
                "gmm.components",
                if preset == Preset::Desk { 32 } else { 512 },
            )?,
            gmm_iterations: kv.parse_or("gmm.iterations", 10)?,
            train,
            cnn_train,
            estimator: match samples {
                0 => Estimator::Mean,
                n => Estimator::Sampled {
                    samples: n,
                    seed: kv.parse_or("score.seed", seed)?,
                },
            },
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        for t in [&self.train, &self.cnn_train] {
            if t.max_epochs == 0 || t.batch_size < 2 || !(t.adam.lr > 0.0) {
                return Err(Error::Config(
                    "epochs, batch (>= 2) and lr must be positive".into(),
                ));
            }
        }
        if self.gmm_components == 0 || self.gmm_iterations == 0 || self.frames < 8 {
            return Err(Error::Config(
                "gmm.components, gmm.iterations and frames must be positive".into(),
            ));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        Ok(())
    }

    /// Architecture for `variant` on `kind` features.
    pub fn vae_config(&self, kind: FeatureKind, variant: Variant) -> Result<VaeConfig> {
        let mut c = match self.preset {
            Preset::Full => VaeConfig::full(kind, variant, self.cond_dim)?,
            Preset::Desk => VaeConfig::desk(kind, variant, self.cond_dim)?,
        };
        if let Some(d) = self.latent_dim {
            c.latent_dim = d;
        }
        if let Some(m) = self.base_channels {
            c.base_channels = m;
        }
        c.frames = self.frames;
        c.alpha = self.alpha;
        c.beta = self.beta;
        c.validate()?;
        Ok(c)
    }
}

/// Everything a `run` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    /// Shared corpus and feature caches, reusable across runs.
    pub cache: PathBuf,
    pub corpus: CorpusSource,
    /// Per-split utterance caps (half bonafide, half spoof); 0 keeps all.
    pub limits: [usize; 3],
    pub features: FeatureKind,
    pub models: Vec<ModelKind>,
    /// VAE whose reconstructions feed the residual CNN, if any.
    pub residual: Option<Variant>,
    pub hyper: Hyper,
    pub seed: u64,
    pub tdcf: TdcfCosts,
    pub asv_scores: Option<PathBuf>,
    /// The parsed file, echoed into the manifest.
    pub source: KeyValues,
}

/// Costs and priors of the t-DCF; the ASV operating point comes later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfCosts {
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    pub pi_tar: f64,
    pub pi_non: f64,
    pub pi_spoof: f64,
}

impl Default for TdcfCosts {
    fn default() -> Self {
        let p = TdcfParams::asvspoof2019(spoofvae_core::metrics::AsvOperatingPoint {
            threshold: 0.0,
            p_fa: 0.0,
            p_miss: 0.0,
            p_miss_spoof: 0.0,
        });
        Self {
            c_miss_asv: p.c_miss_asv,
            c_fa_asv: p.c_fa_asv,
            c_miss_cm: p.c_miss_cm,
            c_fa_cm: p.c_fa_cm,
            pi_tar: p.pi_tar,
            pi_non: p.pi_non,
            pi_spoof: p.pi_spoof,
        }
    }
}

impl TdcfCosts {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            c_miss_asv: kv.parse_or("tdcf.c_miss_asv", d.c_miss_asv)?,
            c_fa_asv: kv.parse_or("tdcf.c_fa_asv", d.c_fa_asv)?,
            c_miss_cm: kv.parse_or("tdcf.c_miss_cm", d.c_miss_cm)?,
            c_fa_cm: kv.parse_or("tdcf.c_fa_cm", d.c_fa_cm)?,
            pi_tar: kv.parse_or("tdcf.pi_tar", d.pi_tar)?,
            pi_non: kv.parse_or("tdcf.pi_non", d.pi_non)?,
            pi_spoof: kv.parse_or("tdcf.pi_spoof", d.pi_spoof)?,
        })
    }

    pub fn with_asv(&self, asv: spoofvae_core::metrics::AsvOperatingPoint) -> TdcfParams {
        TdcfParams {
            c_miss_asv: self.c_miss_asv,
            c_fa_asv: self.c_fa_asv,
            c_miss_cm: self.c_miss_cm,
            c_fa_cm: self.c_fa_cm,
            pi_tar: self.pi_tar,
            pi_non: self.pi_non,
            pi_spoof: self.pi_spoof,
            asv,
        }
    }
}

/// Seed from the environment, or 0.
pub fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an integer"))),
        Err(_) => Ok(0),
    }
}

impl ExperimentConfig {
    /// Build from parsed keys. `seed` is used when the file has no `seed`.
    pub fn from_kv(kv: KeyValues, seed: u64) -> Result<Self> {
        let seed = kv.parse_or("seed", seed)?;
        let out = kv
            .path("out")
            .ok_or_else(|| Error::Config("missing `out` directory".into()))?;
        let cache = kv.path("cache_dir").unwrap_or_else(|| out.join("cache"));
        let corpus = match kv.get("corpus").unwrap_or("generate") {
            "generate" => CorpusSource::Generate(corpus_spec(&kv, 0)?),
            _ => {
                let root = kv.path("corpus").expect("present");
                let protocol = |s: Split| {
                    kv.path(&format!("corpus.protocol.{s}"))
                        .unwrap_or_else(|| root.join("protocol").join(format!("{s}.txt")))
                };
                CorpusSource::Ingest {
                    audio: kv.path("corpus.audio").unwrap_or_else(|| root.join("wav")),
                    protocols: Split::ALL.map(protocol),
                }
            }
        };
        let limits = Split::ALL
            .iter()
            .map(|s| kv.parse_or(&format!("limit.{s}"), 0usize))
            .collect::<Result<Vec<_>>>()?
            .try_into()
            .expect("three splits");
        let features: FeatureKind = kv.parse_or("features", FeatureKind::Cqcc)?;
        if features.is_residual() {
            return Err(Error::Config(
                "`features` must be spec or cqcc; residuals come from `residual`".into(),
            ));
        }
        let models = kv
            .get("models")
            .unwrap_or("gmm")
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<Result<Vec<ModelKind>>>()?;
        for (i, m) in models.iter().enumerate() {
            if models[..i].contains(m) {
                return Err(Error::Config(format!("model `{m}` listed twice")));
            }
        }
        let residual = match kv.get("residual") {
            None | Some("none") => None,
            Some(v) => {
                let variant: Variant = v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad residual model `{v}`")))?;
                if !models.contains(&ModelKind::Vae(variant)) {
                    return Err(Error::Config(format!(
                        "residual model `{v}` must also be listed in `models`"
                    )));
                }
                Some(variant)
            }
        };
        Ok(Self {
            out,
            cache,
            corpus,
            limits,
            features,
            models,
            residual,
            hyper: Hyper::from_kv(&kv, seed)?,
            seed,
            tdcf: TdcfCosts::from_kv(&kv)?,
            asv_scores: kv.path("asv_scores"),
            source: kv,
        })
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        Self::from_kv(KeyValues::from_file(path)?, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn include_and_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("base.cfg"),
            "lr = 0.001\nepochs = 5 # short\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("run.cfg"),
            "# experiment\ninclude base.cfg\nepochs = 7\nout = res\n",
        )
        .unwrap();
        let kv = KeyValues::from_file(&dir.path().join("run.cfg")).unwrap();
        assert_eq!(kv.get("lr"), Some("0.001"));
        assert_eq!(kv.get("epochs"), Some("7"));
        assert_eq!(kv.path("out").unwrap(), dir.path().join("res"));
    }

    #[test]
    fn include_cycle_detected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.cfg"), "include a.cfg\n").unwrap();
        assert!(KeyValues::from_file(&dir.path().join("a.cfg")).is_err());
    }

    #[test]
    fn bad_line_names_line() {
        let err = KeyValues::parse("a = 1\njunk\n", Path::new("x.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn experiment_defaults() {
        let kv = KeyValues::parse(
            "out = o\nmodels = gmm, cvae\nresidual = cvae\n",
            Path::new("x.cfg"),
        )
        .unwrap();
        let c = ExperimentConfig::from_kv(kv, 3).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.models, [ModelKind::Gmm, ModelKind::Vae(Variant::Cvae)]);
        assert_eq!(c.hyper.gmm_components, 32);
        assert_eq!(c.hyper.train.adam.lr, 1e-4);
        assert_eq!(c.hyper.train.max_epochs, 300);
        assert_eq!(c.hyper.train.patience, 10);
        assert_eq!(c.hyper.train.batch_size, 16);
        let CorpusSource::Generate(spec) = &c.corpus else {
            panic!()
        };
        assert_eq!(spec.split(Split::Eval).n_spoof, 12008);
    }

    #[test]
    fn residual_requires_listed_model() {
        let kv = KeyValues::parse(
            "out = o\nmodels = gmm\nresidual = cvae\n",
            Path::new("x.cfg"),
        )
        .unwrap();
        assert!(ExperimentConfig::from_kv(kv, 0).is_err());
        let kv = KeyValues::parse("out = o\nmodels = gmm, gmm\n", Path::new("x.cfg")).unwrap();
        assert!(ExperimentConfig::from_kv(kv, 0).is_err());
    }

    #[test]
    fn corpus_keys() {
        let kv = KeyValues::parse(
            "corpus.train = 2,3,4\ncorpus.dev = 1,1,1\ncorpus.eval = 3,2,2\ncorpus.channel.A = 1 0.5 | 2000 | inf | 0\n",
            Path::new("x.cfg"),
        )
        .unwrap();
        let s = corpus_spec(&kv, 9).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.split(Split::Train).n_spoof, 4);
        assert_eq!(s.split(Split::Dev).first_speaker, 2);
        assert_eq!(s.split(Split::Eval).first_speaker, 3);
        assert_eq!(s.replay_channels.len(), 1);
        assert_eq!(s.replay_channels[0].snr_db, f64::INFINITY);
        let bad = KeyValues::parse("corpus.train = 2,3\n", Path::new("x.cfg")).unwrap();
        assert!(corpus_spec(&bad, 0).is_err());
    }

    #[test]
    fn desk_and_full_presets() {
        let kv = KeyValues::parse("preset = full\n", Path::new("x.cfg")).unwrap();
        let h = Hyper::from_kv(&kv, 0).unwrap();
        assert_eq!(h.gmm_components, 512);
        assert_eq!(
            h.vae_config(FeatureKind::Spectrogram, Variant::Cvae)
                .unwrap()
                .latent_dim,
            128
        );
        let h = Hyper::from_kv(&KeyValues::default(), 0).unwrap();
        let c = h.vae_config(FeatureKind::Cqcc, Variant::Cvae).unwrap();
        assert_eq!((c.latent_dim, c.base_channels), (32, 8));
        assert!(
            h.vae_config(FeatureKind::Cqcc, Variant::Naive)
                .unwrap()
                .cond_dim
                == 0
        );
    }
}
