use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use spoofvae::cache::FeatureCache;
use spoofvae::config::{self, ExperimentConfig, Hyper, KeyValues, ModelKind, TdcfCosts};
use spoofvae::error::{Error, Stage, StageExt};
use spoofvae::fsx;
use spoofvae::models::Detector;
use spoofvae::pipeline::{self, load_protocols};
use spoofvae::report::evaluate;
use spoofvae::scores::{read_asv_scores, read_scores, write_scores};
use spoofvae::stages::{self, Labelled};
use spoofvae_core::corpus::{Label, Split, TrialRecord};
use spoofvae_core::features::{FeatureKind, FeatureMatrix, UNIFIED_FRAMES};

#[derive(Parser)]
#[command(
    name = "spoofvae",
    version,
    about = "Replay spoofing detection with GMM, VAE and CNN back-ends"
)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = config::SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a replay corpus: wav/ plus protocol/{train,dev,eval}.txt.
    GenCorpus {
        /// key = value corpus settings (corpus.*, limit.*).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features for every trial of the given protocols.
    ExtractFeatures {
        /// spec or cqcc.
        #[arg(long)]
        kind: FeatureKind,
        /// Directory of <utt_id>.wav files.
        #[arg(long = "in")]
        audio: PathBuf,
        #[arg(long, required = true)]
        protocol: Vec<PathBuf>,
        #[arg(long, default_value_t = UNIFIED_FRAMES)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one back-end and write a checkpoint.
    Train {
        /// gmm, vae, cvae, acvae1, acvae2 or cnn.
        #[arg(long)]
        model: ModelKind,
        /// Feature cache directory.
        #[arg(long)]
        cache: PathBuf,
        /// Expected features in the cache: spec, cqcc or residual.
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        train: PathBuf,
        /// Required for everything except GMMs.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Conditioning width: 2 (class) or twice the phrase count (class
        /// and phrase).
        #[arg(long)]
        cond: Option<usize>,
        /// Fit only one GMM class.
        #[arg(long)]
        class: Option<Label>,
        /// key = value hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trials with a checkpoint. GMM halves trained separately can be
    /// passed as two --model arguments.
    Score {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        /// Average this many posterior draws instead of decoding the mean.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write |x - mu_x| residual features from a VAE checkpoint.
    ExtractResiduals {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, required = true)]
        protocol: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// EER and min t-DCF of a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        /// `id key score` ASV scores; synthetic ones are drawn otherwise.
        #[arg(long)]
        asv_scores: Option<PathBuf>,
        /// key = value t-DCF costs (tdcf.*).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior means under bonafide conditioning, one row per trial.
    ExportLatents {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_kv(path: Option<&Path>) -> spoofvae::Result<KeyValues> {
    match path {
        Some(p) => KeyValues::from_file(p),
        None => Ok(KeyValues::default()),
    }
}

fn load_features(cache: &Path, records: &[TrialRecord]) -> spoofvae::Result<Vec<FeatureMatrix>> {
    let cache = FeatureCache::open(cache)?;
    let first = records
        .first()
        .ok_or_else(|| Error::Config("the protocol is empty".into()))?;
    let kind = cache.get(&first.utt_id)?.kind();
    cache.load(records, kind)
}

fn require_vae(det: &Detector) -> spoofvae::Result<&spoofvae_core::vae::VaeSystem<f32>> {
    det.as_vae()
        .ok_or_else(|| Error::Config(format!("a VAE checkpoint is required, got {}", det.name())))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenCorpus { spec, out } => {
            let kv = load_kv(spec.as_deref()).stage(Stage::Config)?;
            let corpus = config::corpus_spec(&kv, seed).stage(Stage::Config)?;
            let mut limits = [0usize; 3];
            for (l, s) in limits.iter_mut().zip(Split::ALL) {
                *l = kv.parse_or(&format!("limit.{s}"), 0).stage(Stage::Config)?;
            }
            stages::generate_corpus(&corpus, limits, &out).stage(Stage::Corpus)?;
        }
        Command::ExtractFeatures {
            kind,
            audio,
            protocol,
            frames,
            out,
        } => {
            if kind.is_residual() {
                bail!("residual features come from `extract-residuals`");
            }
            let records = load_protocols(&protocol).stage(Stage::Features)?;
            stages::extract_features(kind, frames, &audio, &records, &out)
                .stage(Stage::Features)?;
        }
        Command::Train {
            model,
            cache,
            features,
            train,
            dev,
            cond,
            class,
            config,
            out,
        } => {
            let mut kv = load_kv(config.as_deref()).stage(Stage::Config)?;
            if let Some(c) = cond {
                kv.set("cond", &c.to_string());
            }
            let hyper = Hyper::from_kv(&kv, seed).stage(Stage::Config)?;
            let tr = load_protocols(&[train]).stage(Stage::Train)?;
            let tr_feats = load_features(&cache, &tr).stage(Stage::Train)?;
            let kind = tr_feats[0].kind();
            if let Some(f) = features {
                let ok = match f.as_str() {
                    "residual" => kind.is_residual(),
                    other => other.parse::<FeatureKind>().stage(Stage::Config)? == kind,
                };
                if !ok {
                    return Err(Error::Config(format!(
                        "--features {f} does not match the {kind} cache"
                    )))
                    .stage(Stage::Train)?;
                }
            }
            let train = Labelled::new(&tr_feats, &tr);
            let det = if model == ModelKind::Gmm {
                stages::train_gmm(kind, train, class, &hyper).stage(Stage::Train)?
            } else {
                if class.is_some() {
                    bail!("--class only applies to GMMs");
                }
                let dev = dev.context("--dev is required for network back-ends")?;
                let dv = load_protocols(&[dev]).stage(Stage::Train)?;
                let dv_feats = load_features(&cache, &dv).stage(Stage::Train)?;
                let dev = Labelled::new(&dv_feats, &dv);
                let (det, history) = match model {
                    ModelKind::Vae(v) => stages::train_vae_detector(kind, v, &hyper, train, dev),
                    _ => stages::train_cnn_detector(kind, &hyper, train, dev),
                }
                .stage(Stage::Train)?;
                fsx::write_bytes(&out.with_extension("log"), history.render().as_bytes())
                    .stage(Stage::Train)?;
                det
            };
            det.save(&out).stage(Stage::Train)?;
        }
        Command::Score {
            model,
            cache,
            protocol,
            samples,
            out,
        } => {
            let mut det = Detector::load(&model[0]).stage(Stage::Score)?;
            for m in &model[1..] {
                det = det
                    .merge(Detector::load(m).stage(Stage::Score)?)
                    .stage(Stage::Score)?;
            }
            let records = load_protocols(&[protocol]).stage(Stage::Score)?;
            let feats = load_features(&cache, &records).stage(Stage::Score)?;
            let est = match samples {
                0 => spoofvae_core::vae::Estimator::Mean,
                n => spoofvae_core::vae::Estimator::Sampled { samples: n, seed },
            };
            let scores =
                stages::score(&det, Labelled::new(&feats, &records), est).stage(Stage::Score)?;
            write_scores(&out, &scores).stage(Stage::Score)?;
        }
        Command::ExtractResiduals {
            model,
            cache,
            protocol,
            out,
        } => {
            let det = Detector::load(&model).stage(Stage::Residuals)?;
            let sys = require_vae(&det).stage(Stage::Residuals)?;
            let records = load_protocols(&protocol).stage(Stage::Residuals)?;
            let feats = load_features(&cache, &records).stage(Stage::Residuals)?;
            stages::write_residual_cache(sys, Labelled::new(&feats, &records), &out)
                .stage(Stage::Residuals)?;
        }
        Command::Evaluate {
            scores,
            protocol,
            asv_scores,
            config,
            out,
        } => {
            let kv = load_kv(config.as_deref()).stage(Stage::Config)?;
            let costs = TdcfCosts::from_kv(&kv).stage(Stage::Config)?;
            let records = load_protocols(&[protocol]).stage(Stage::Evaluate)?;
            let s = read_scores(&scores).stage(Stage::Evaluate)?;
            let asv = match &asv_scores {
                Some(p) => Some(read_asv_scores(p).stage(Stage::Evaluate)?),
                None => None,
            };
            let name = asv_scores
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            let ev = evaluate(&s, &records, asv.as_ref().map(|a| (a, name)), &costs, seed)
                .stage(Stage::Evaluate)?;
            let header = [("scores", scores.display().to_string())];
            fsx::write_bytes(&out, ev.render(&header).as_bytes()).stage(Stage::Evaluate)?;
            fsx::write_bytes(&out.with_extension("det.txt"), ev.det_points().as_bytes())
                .stage(Stage::Evaluate)?;
            println!("eer = {:.6}\nmin_tdcf = {:.6}", ev.eer, ev.min_tdcf);
        }
        Command::Run { config, out } => {
            let mut kv = KeyValues::from_file(&config).stage(Stage::Config)?;
            if let Some(o) = out {
                kv.set("out", &o.to_string_lossy());
            }
            let cfg = ExperimentConfig::from_kv(kv, seed).stage(Stage::Config)?;
            let outcome = pipeline::run_experiment(&cfg)?;
            for (name, ev) in &outcome.evaluations {
                println!("{name}: eer = {:.6}, min_tdcf = {:.6}", ev.eer, ev.min_tdcf);
            }
        }
        Command::ExportLatents {
            model,
            cache,
            protocol,
            out,
        } => {
            let det = Detector::load(&model).stage(Stage::Latents)?;
            let sys = require_vae(&det).stage(Stage::Latents)?;
            let records = load_protocols(&[protocol]).stage(Stage::Latents)?;
            let feats = load_features(&cache, &records).stage(Stage::Latents)?;
            let text = stages::export_latents(sys, Labelled::new(&feats, &records))
                .stage(Stage::Latents)?;
            fsx::write_bytes(&out, text.as_bytes()).stage(Stage::Latents)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
