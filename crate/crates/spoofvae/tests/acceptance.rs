//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! The core oracle suites are compiled in as modules and run once more
//! here; the trend, determinism and training checks drive the full
//! pipeline at desk scale. A FAIL line is a measured outcome and does not
//! fail the target; the target fails only if the desk pipeline errors. The
//! oracle, determinism and pipeline suites gate the build on their own.
// Negated comparisons make NaN a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use spoofvae::config::{ExperimentConfig, KeyValues};
use spoofvae::pipeline::{residual_pipeline, run_experiment, RunOutcome};
use spoofvae::stages::History;
use spoofvae_core::diffnum::Array;
use spoofvae_core::features::{FeatureKind, FeatureMatrix};
use spoofvae_core::rng::{stream, Rng};
use spoofvae_core::train::{fit, Dataset, TrainConfig, Trainable};
use spoofvae_core::vae::{conditioning, standard_normal, VaeConfig, VaeModel, VaeSession, Variant};

#[allow(dead_code)]
#[path = "../../core/tests/architecture.rs"]
mod architecture;
#[allow(dead_code)]
#[path = "../../core/tests/em.rs"]
mod em;
#[allow(dead_code)]
#[path = "../../core/tests/gradients.rs"]
mod gradients;
#[allow(dead_code)]
#[path = "../../core/tests/kl_oracle.rs"]
mod kl_oracle;
#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/metric_oracles.rs"]
mod metric_oracles;

const SEEDS: [u64; 3] = [1, 2, 3];

type Check = Result<String, String>;

/// Run named panicking checks in order, stopping at the first failure.
fn suite(checks: &[(&str, fn())]) -> Check {
    for (name, f) in checks {
        catch_unwind(*f).map_err(|e| format!("{name}: {}", panic_text(&*e)))?;
    }
    Ok(format!("{} checks", checks.len()))
}

fn panic_text(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn within(limit: Duration, t: Duration, c: Check) -> Check {
    let detail = c?;
    if t > limit {
        return Err(format!(
            "{detail}, but took {:.1} s (limit {} s)",
            t.as_secs_f64(),
            limit.as_secs()
        ));
    }
    Ok(format!("{detail}, {:.1} s", t.as_secs_f64()))
}

fn timed(f: impl FnOnce() -> Check) -> (Check, Duration) {
    let t = Instant::now();
    let c = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| Err(panic_text(&*e)));
    (c, t.elapsed())
}

fn criterion_1() -> Check {
    use gradients::*;
    suite(&[
        ("linear", linear),
        ("conv2d", conv2d_same_padding),
        ("conv2d_transpose", conv2d_transpose),
        ("batchnorm train", batchnorm_train_mode),
        ("batchnorm eval", batchnorm_eval_mode),
        ("conv blocks", conv_blocks),
        ("activations", activations_and_reshapes),
        ("gaussian nll", gaussian_nll_gradients),
        ("kl", kl_gradients),
        ("bce", bce_gradients),
        ("reparameterization", reparameterization_gradients),
        ("encoder", encoder_gradients),
        ("decoder", decoder_gradients),
        ("latent classifier", latent_classifier_gradients),
        ("cnn", cnn_gradients),
        ("full objective", full_objective_every_variant),
    ])
}

fn criterion_2() -> Check {
    suite(&[
        ("exact cases", kl_oracle::exact_cases),
        ("monte carlo", kl_oracle::matches_monte_carlo),
    ])
}

fn criterion_3() -> Check {
    suite(&[
        ("monotone", em::log_likelihood_never_decreases),
        ("C = 1", em::single_component_equals_sample_moments),
        ("two clusters", em::recovers_two_clusters),
    ])
}

fn criterion_4() -> Check {
    suite(&[
        ("100 instances", metric_oracles::hundred_seeded_instances),
        ("eer hand cases", metric_oracles::eer_hand_cases),
        ("tdcf hand cases", metric_oracles::tdcf_hand_cases),
    ])
}

fn criterion_5() -> Check {
    suite(&[
        (
            "spectrogram encoder",
            architecture::spectrogram_encoder_shapes,
        ),
        ("cqcc encoder", architecture::cqcc_encoder_has_four_layers),
        ("decoder", architecture::decoder_widths_and_output_shapes),
    ])
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg")
}

/// The desk config with `out`, the shared cache and any extra keys set.
fn desk(out: &Path, cache: &Path, seed: u64, extra: &[(&str, &str)]) -> ExperimentConfig {
    let mut kv = KeyValues::from_file(&config_path()).expect("desk config");
    kv.set("out", out.to_str().unwrap());
    kv.set("cache_dir", cache.to_str().unwrap());
    for (k, v) in extra {
        kv.set(k, v);
    }
    ExperimentConfig::from_kv(kv, seed).expect("valid config")
}

fn criterion_8(tmp: &Path) -> Check {
    let tiny: &[(&str, &str)] = &[
        ("corpus.train", "4,40,40"),
        ("corpus.dev", "2,10,10"),
        ("corpus.eval", "2,20,20"),
        ("limit.train", "0"),
        ("limit.dev", "0"),
        ("limit.eval", "0"),
        ("epochs", "3"),
    ];
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let cfg = desk(
            &tmp.join("det").join(run),
            &tmp.join("det").join(format!("cache-{run}")),
            7,
            tiny,
        );
        run_experiment(&cfg).map_err(|e| e.to_string())?;
        outs.push(cfg.out);
    }
    let scores =
        spoofvae::manifest::list_files(&outs[0].join("scores"), &[]).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for rel in scores
        .iter()
        .map(|p| Path::new("scores").join(p))
        .chain([PathBuf::from("manifest.txt")])
    {
        let (a, b) = (
            std::fs::read(outs[0].join(&rel)),
            std::fs::read(outs[1].join(&rel)),
        );
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => compared += 1,
            _ => return Err(format!("{} differs between runs", rel.display())),
        }
    }
    Ok(format!("{compared} files byte-identical"))
}

/// Median of three.
fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct DeskRuns {
    runs: Vec<RunOutcome>,
    residual: Vec<f64>,
    main_time: Duration,
    residual_time: Duration,
}

fn desk_runs(tmp: &Path) -> Result<DeskRuns, String> {
    let cache = tmp.join("desk-cache");
    let mut out = DeskRuns {
        runs: Vec::new(),
        residual: Vec::new(),
        main_time: Duration::ZERO,
        residual_time: Duration::ZERO,
    };
    for seed in SEEDS {
        let dir = tmp.join(format!("desk-{seed}"));
        let t = Instant::now();
        let run = run_experiment(&desk(&dir, &cache, seed, &[("residual", "none")]))
            .map_err(|e| e.to_string())?;
        out.main_time += t.elapsed();
        let t = Instant::now();
        let (ev, _) =
            residual_pipeline(&desk(&dir, &cache, seed, &[])).map_err(|e| e.to_string())?;
        out.residual_time += t.elapsed();
        let eer = |n: &str| run.evaluation(n).map(|e| e.eer).unwrap_or(f64::NAN);
        eprintln!(
            "seed {seed}: gmm {:.4} vae {:.4} cvae {:.4} cnn-residual {:.4}",
            eer("gmm"),
            eer("vae"),
            eer("cvae"),
            ev.eer
        );
        out.residual.push(ev.eer);
        out.runs.push(run);
    }
    Ok(out)
}

fn medians(d: &DeskRuns, name: &str) -> f64 {
    median(
        d.runs
            .iter()
            .map(|r| r.evaluation(name).expect("evaluated").eer)
            .collect(),
    )
}

fn criterion_6(d: &DeskRuns) -> Check {
    let (gmm, vae, cvae) = (medians(d, "gmm"), medians(d, "vae"), medians(d, "cvae"));
    let detail = format!("median EER gmm {gmm:.4}, vae {vae:.4}, cvae {cvae:.4}");
    let mut failed = Vec::new();
    if !(gmm < 0.15) {
        failed.push("(a) gmm >= 0.15");
    }
    if !(cvae <= vae) {
        failed.push("(b) cvae > vae");
    }
    if !(cvae < 0.25) {
        failed.push("(c) cvae >= 0.25");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", failed.join(", ")))
    }
}

fn criterion_7(d: &DeskRuns) -> Check {
    let (cnn, cvae) = (median(d.residual.clone()), medians(d, "cvae"));
    let detail = format!("median EER cnn-residual {cnn:.4}, cvae {cvae:.4}");
    if cnn <= cvae {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Training loss at epoch 5 below epoch 1 for every trained network.
fn loss_drops(name: &str, h: &History) -> Result<(), String> {
    for (tag, epochs, ..) in &h.runs {
        match (epochs.first(), epochs.get(4)) {
            (Some(e1), Some(e5)) if e5.train_loss < e1.train_loss => {}
            (Some(e1), Some(e5)) => {
                return Err(format!(
                    "{name}/{tag}: epoch 5 {:.3} >= epoch 1 {:.3}",
                    e5.train_loss, e1.train_loss
                ))
            }
            _ => return Err(format!("{name}/{tag}: fewer than 5 epochs")),
        }
    }
    Ok(())
}

/// A VAE session whose dev loss never moves.
struct FrozenDev<'a>(VaeSession<'a>);

impl Trainable for FrozenDev<'_> {
    type Snapshot = ();

    fn train_len(&self) -> usize {
        self.0.train_len()
    }

    fn train_step(&mut self, batch: &[usize], noise: &mut Rng) -> spoofvae_core::Result<f64> {
        self.0.train_step(batch, noise)
    }

    fn dev_loss(&mut self) -> spoofvae_core::Result<f64> {
        Ok(1.0)
    }

    fn snapshot(&self) {}
}

fn frozen_dev_stops() -> Result<(), String> {
    let cfg = VaeConfig::desk(FeatureKind::Cqcc, Variant::Cvae, 2).map_err(|e| e.to_string())?;
    let mut rng = stream(3, "frozen");
    let mut ds = Dataset::new(cfg.frames, cfg.dims, 2);
    for i in 0..8 {
        let x: Array<f64> = standard_normal(&[cfg.frames * cfg.dims], &mut rng);
        let m =
            FeatureMatrix::new(FeatureKind::Cqcc, cfg.frames, cfg.dims, x.data().to_vec()).unwrap();
        let label = if i % 2 == 0 {
            spoofvae_core::corpus::Label::Bonafide
        } else {
            spoofvae_core::corpus::Label::Spoof
        };
        ds.push(&m, &conditioning(label, 1, 2).unwrap(), label.target())
            .unwrap();
    }
    let tcfg = TrainConfig {
        max_epochs: 300,
        patience: 10,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let session = VaeSession::new(VaeModel::new(cfg, 5).unwrap(), tcfg.adam, &ds, &ds)
        .map_err(|e| e.to_string())?;
    let report = fit(&mut FrozenDev(session), &tcfg).map_err(|e| e.to_string())?;
    if report.stopped_early && report.history.len() == 11 && report.best_epoch == 1 {
        Ok(())
    } else {
        Err(format!(
            "frozen dev ran {} epochs, stopped_early = {}",
            report.history.len(),
            report.stopped_early
        ))
    }
}

fn criterion_9(tmp: &Path, d: &DeskRuns) -> Check {
    let first = &d.runs[0];
    for name in ["vae", "cvae"] {
        loss_drops(
            name,
            first.history(name).ok_or(format!("no {name} history"))?,
        )?;
    }
    let dir = tmp.join("desk-ac");
    let cfg = desk(
        &dir,
        &tmp.join("desk-cache"),
        SEEDS[0],
        &[
            ("models", "acvae1, acvae2"),
            ("residual", "none"),
            ("epochs", "5"),
        ],
    );
    let run = run_experiment(&cfg).map_err(|e| e.to_string())?;
    for name in ["acvae1", "acvae2"] {
        loss_drops(name, run.history(name).ok_or(format!("no {name} history"))?)?;
    }
    frozen_dev_stops()?;
    Ok(
        "loss falls by epoch 5 for vae, cvae, acvae1, acvae2; frozen dev stops after 11 epochs"
            .into(),
    )
}

fn report(id: u8, title: &str, c: &Check) {
    match c {
        Ok(d) => println!("PASS {id} {title}: {d}"),
        Err(d) => println!("FAIL {id} {title}: {d}"),
    }
}

fn main() {
    let _ = env_logger::builder()
        .is_test(true)
        .filter_level(log::LevelFilter::Warn)
        .try_init();
    // Panics inside checks are reported, not printed.
    std::panic::set_hook(Box::new(|_| {}));
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results = Vec::new();
    let mut record = |id: u8, title: &str, c: Check| {
        report(id, title, &c);
        results.push(c.is_ok());
    };

    let (c, t) = timed(criterion_1);
    record(
        1,
        "gradient correctness",
        within(Duration::from_secs(120), t, c),
    );
    let (c, _) = timed(criterion_2);
    record(2, "KL oracle", c);
    let (c, t) = timed(criterion_3);
    record(3, "EM monotonicity", within(Duration::from_secs(60), t, c));
    let (c, t) = timed(criterion_4);
    record(4, "metric oracles", within(Duration::from_secs(60), t, c));
    let (c, _) = timed(criterion_5);
    record(5, "architecture conformance", c);

    let desk = desk_runs(tmp.path());
    match &desk {
        Ok(d) => {
            let c6 = within(Duration::from_secs(45 * 60), d.main_time, criterion_6(d));
            record(6, "end-to-end trends", c6);
            record(
                7,
                "residual frontend",
                within(
                    Duration::from_secs(20 * 60),
                    d.residual_time,
                    criterion_7(d),
                ),
            );
        }
        Err(e) => {
            record(6, "end-to-end trends", Err(e.clone()));
            record(7, "residual frontend", Err(e.clone()));
        }
    }
    let (c, _) = timed(|| criterion_8(tmp.path()));
    record(8, "determinism", c);
    let c = match &desk {
        Ok(d) => timed(|| criterion_9(tmp.path(), d)).0,
        Err(e) => Err(e.clone()),
    };
    record(9, "training sanity", c);

    let passed = results.iter().filter(|ok| **ok).count();
    println!("{passed} of {} criteria passed", results.len());
    // The desk pipeline itself failing is a defect, not a measurement.
    if desk.is_err() {
        std::process::exit(1);
    }
}
