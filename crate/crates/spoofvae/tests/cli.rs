use std::path::Path;
use std::process::{Command, Output};

use spoofvae::report::parse_report;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spoofvae"));
    c.env_remove("SPOOFVAE_SEED").env("RUST_LOG", "warn");
    c
}

fn ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{cmd:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_of(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(!out.status.success(), "{cmd:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// Tiny corpus plus a CQCC cache over all three splits.
fn corpus(dir: &Path) {
    std::fs::write(
        dir.join("corpus.cfg"),
        "corpus.train = 4,12,12\ncorpus.dev = 2,6,6\ncorpus.eval = 2,5,5\n",
    )
    .unwrap();
    ok(bin().current_dir(dir).args([
        "gen-corpus",
        "--spec",
        "corpus.cfg",
        "--out",
        "c",
        "--seed",
        "2",
    ]));
    ok(bin().current_dir(dir).args([
        "extract-features",
        "--kind",
        "cqcc",
        "--in",
        "c/wav",
        "--protocol",
        "c/protocol/train.txt",
        "--protocol",
        "c/protocol/dev.txt",
        "--protocol",
        "c/protocol/eval.txt",
        "--out",
        "f",
    ]));
}

#[test]
fn gmm_halves_score_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    for class in ["bonafide", "spoof"] {
        ok(bin()
            .current_dir(d)
            .args([
                "train",
                "--model",
                "gmm",
                "--class",
                class,
                "--cache",
                "f",
                "--train",
                "c/protocol/train.txt",
                "--out",
            ])
            .arg(format!("{class}.ckpt")));
    }
    ok(bin().current_dir(d).args([
        "score",
        "--model",
        "bonafide.ckpt",
        "--model",
        "spoof.ckpt",
        "--cache",
        "f",
        "--protocol",
        "c/protocol/eval.txt",
        "--out",
        "s.txt",
    ]));
    assert_eq!(
        std::fs::read_to_string(d.join("s.txt"))
            .unwrap()
            .lines()
            .count(),
        10
    );
    ok(bin().current_dir(d).args([
        "evaluate",
        "--scores",
        "s.txt",
        "--protocol",
        "c/protocol/eval.txt",
        "--out",
        "r.txt",
    ]));
    let report = parse_report(&std::fs::read_to_string(d.join("r.txt")).unwrap());
    let eer: f64 = report["eer"].parse().unwrap();
    let tdcf: f64 = report["min_tdcf"].parse().unwrap();
    assert!((0.0..=1.0).contains(&eer) && (0.0..=1.0).contains(&tdcf));
    assert_eq!(report["trials.bonafide"], "5");
    assert!(d.join("r.det.txt").exists());

    // One half alone cannot score.
    let err = stderr_of(bin().current_dir(d).args([
        "score",
        "--model",
        "spoof.ckpt",
        "--cache",
        "f",
        "--protocol",
        "c/protocol/eval.txt",
        "--out",
        "x.txt",
    ]));
    assert!(err.starts_with("error: [score]"), "{err}");
}

#[test]
fn latents_residuals_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    std::fs::write(d.join("h.cfg"), "epochs = 2\nlatent_dim = 128\n").unwrap();
    ok(bin().current_dir(d).args([
        "train",
        "--model",
        "cvae",
        "--features",
        "cqcc",
        "--cond",
        "20",
        "--config",
        "h.cfg",
        "--cache",
        "f",
        "--train",
        "c/protocol/train.txt",
        "--dev",
        "c/protocol/dev.txt",
        "--out",
        "cvae.ckpt",
    ]));
    assert!(std::fs::read_to_string(d.join("cvae.log"))
        .unwrap()
        .contains("best_epoch"));

    let latents = |out: &str| {
        ok(bin().current_dir(d).args([
            "export-latents",
            "--model",
            "cvae.ckpt",
            "--cache",
            "f",
            "--protocol",
            "c/protocol/eval.txt",
            "--out",
            out,
        ]));
        std::fs::read(d.join(out)).unwrap()
    };
    let a = latents("a.txt");
    assert_eq!(a, latents("b.txt"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        // id, 128 latents, label, phrase
        assert_eq!(line.split(' ').count(), 131, "{line}");
    }

    ok(bin().current_dir(d).args([
        "extract-residuals",
        "--model",
        "cvae.ckpt",
        "--cache",
        "f",
        "--protocol",
        "c/protocol/train.txt",
        "--protocol",
        "c/protocol/dev.txt",
        "--out",
        "res",
    ]));
    let res = spoofvae::cache::FeatureCache::open(&d.join("res")).unwrap();
    assert_eq!(res.len(), 36);
    for id in res.ids() {
        assert!(res.get(id).unwrap().values().iter().all(|v| *v >= 0.0));
    }
    std::fs::write(d.join("cnn.cfg"), "epochs = 2\n").unwrap();
    ok(bin().current_dir(d).args([
        "train",
        "--model",
        "cnn",
        "--features",
        "residual",
        "--config",
        "cnn.cfg",
        "--cache",
        "res",
        "--train",
        "c/protocol/train.txt",
        "--dev",
        "c/protocol/dev.txt",
        "--out",
        "cnn.ckpt",
    ]));
    let err = stderr_of(bin().current_dir(d).args([
        "train",
        "--model",
        "cnn",
        "--features",
        "spec",
        "--cache",
        "res",
        "--train",
        "c/protocol/train.txt",
        "--dev",
        "c/protocol/dev.txt",
        "--out",
        "x.ckpt",
    ]));
    assert!(err.contains("does not match"), "{err}");

    // A protocol entry with no cached features is named.
    std::fs::create_dir(d.join("p")).unwrap();
    std::fs::write(
        d.join("p/eval.txt"),
        "E_0001 bonafide S01\nE_9999 spoof S02 R1\n",
    )
    .unwrap();
    let err = stderr_of(bin().current_dir(d).args([
        "export-latents",
        "--model",
        "cvae.ckpt",
        "--cache",
        "f",
        "--protocol",
        "p/eval.txt",
        "--out",
        "x.txt",
    ]));
    assert!(
        err.starts_with("error: [latents]") && err.contains("E_9999"),
        "{err}"
    );
}

#[test]
fn seed_from_environment_and_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("corpus.cfg"),
        "corpus.train = 2,2,2\ncorpus.dev = 2,2,2\ncorpus.eval = 2,2,2\n",
    )
    .unwrap();
    ok(bin().current_dir(d).env("SPOOFVAE_SEED", "9").args([
        "gen-corpus",
        "--spec",
        "corpus.cfg",
        "--out",
        "a",
    ]));
    ok(bin().current_dir(d).args([
        "gen-corpus",
        "--spec",
        "corpus.cfg",
        "--out",
        "b",
        "--seed",
        "9",
    ]));
    let wav = |root: &str| std::fs::read(d.join(root).join("wav/T_0001.wav")).unwrap();
    assert_eq!(wav("a"), wav("b"));

    let err = stderr_of(bin().current_dir(d).env("SPOOFVAE_SEED", "x").args([
        "gen-corpus",
        "--out",
        "c",
    ]));
    assert!(
        err.contains("SPOOFVAE_SEED") || err.contains("invalid value"),
        "{err}"
    );

    std::fs::write(d.join("bad.txt"), "E_0001 genuine S01\n").unwrap();
    std::fs::write(d.join("s.txt"), "E_0001 1.0\n").unwrap();
    let err = stderr_of(bin().current_dir(d).args([
        "evaluate",
        "--scores",
        "s.txt",
        "--protocol",
        "bad.txt",
        "--out",
        "r",
    ]));
    assert!(err.contains("cannot tell the split"), "{err}");
    std::fs::rename(d.join("bad.txt"), d.join("eval.txt")).unwrap();
    let err = stderr_of(bin().current_dir(d).args([
        "evaluate",
        "--scores",
        "s.txt",
        "--protocol",
        "eval.txt",
        "--out",
        "r",
    ]));
    assert!(
        err.starts_with("error: [evaluate]") && err.contains("eval.txt:1"),
        "{err}"
    );
}
