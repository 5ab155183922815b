mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::SMALL_CONFIG;
use mdxnet::wav::read_wav;
use tempfile::tempdir;

fn mdxnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdxnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = mdxnet(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    let o = mdxnet(dir, args);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"), "{args:?}");
    o.status.code().unwrap()
}

fn setup(dir: &Path) {
    std::fs::write(dir.join("small.cfg"), SMALL_CONFIG).unwrap();
    ok(dir, &["gen-data", "--songs", "2", "--duration", "1.5", "--rate", "8000", "--out", "data"]);
    for s in ["vocals", "drums", "bass", "other"] {
        ok(dir, &["train", "--config", "small.cfg", "--data", "data/index.csv", "--target", s, "--out", "seps"]);
    }
}

#[test]
fn every_verb_runs_end_to_end() {
    let tmp = tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    assert!(d.join("data/song_001/mixture.wav").exists());
    for s in ["vocals", "drums", "bass", "other"] {
        assert!(d.join(format!("seps/{s}.ckpt")).exists());
        let loss = std::fs::read_to_string(d.join(format!("seps/{s}_loss.csv"))).unwrap();
        assert_eq!(loss.lines().count(), 1 + 3);
        let val = std::fs::read_to_string(d.join(format!("seps/{s}_val_loss.csv"))).unwrap();
        assert_eq!(val.lines().nth(1).unwrap().split(',').next(), Some("0"));
    }

    ok(d, &["train-mixer", "--config", "small.cfg", "--data", "data/index.csv", "--separators", "seps", "--out", "mix"]);
    assert!(d.join("mix/mixer.ckpt").exists());
    assert!(d.join("mix/mixer_loss.csv").exists());

    let out = ok(
        d,
        &[
            "separate", "--input", "data/song_000/mixture.wav", "--separators", "seps", "--mixer", "mix/mixer.ckpt",
            "--blend", "0.5,1,0,0.25", "--out", "sep",
        ],
    );
    assert_eq!(out.lines().count(), 4);
    let mix = read_wav(d.join("data/song_000/mixture.wav")).unwrap();
    let drums = read_wav(d.join("sep/mixture_drums.wav")).unwrap();
    assert_eq!((drums.len(), drums.channels()), (mix.len(), 2));
    let bass = read_wav(d.join("sep/mixture_bass.wav")).unwrap();
    for (b, m) in bass.samples().iter().zip(mix.samples()) {
        assert_eq!(*b, ((m * 0.25) as f32) as f64);
    }

    let table = ok(
        d,
        &["eval", "--config", "small.cfg", "--data", "data/index.csv", "--separators", "seps", "--workers", "2", "--out", "ev"],
    );
    assert!(table.contains("median"));
    let csv = std::fs::read_to_string(d.join("ev/sdr_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(csv.lines().next(), Some("song,source,median_sdr_db"));

    ok(d, &["blend", "--first", "sep", "--second", "sep", "--name", "mixture", "--weights", "0.3", "--out", "bl"]);
    for s in ["vocals", "drums", "bass", "other"] {
        let a = std::fs::read(d.join(format!("sep/mixture_{s}.wav"))).unwrap();
        let b = std::fs::read(d.join(format!("bl/mixture_{s}.wav"))).unwrap();
        assert_eq!(a, b, "{s}");
    }

    ok(d, &["dump-tdf", "--checkpoint", "seps/bass.ckpt", "--block", "0", "--out", "tdf"]);
    let m = std::fs::read_to_string(d.join("tdf/enc0.tdf.csv")).unwrap();
    assert_eq!(m.lines().count(), 32);
    assert_eq!(m.lines().next().unwrap().split(',').count(), 32);
    ok(d, &["dump-tdf", "--checkpoint", "seps/bass.ckpt", "--block", "bottleneck.tdf", "--out", "tdf"]);
    assert!(d.join("tdf/bottleneck.tdf.csv").exists());

    let n: usize = ok(d, &["param-count", "--checkpoint", "seps/bass.ckpt"]).trim().parse().unwrap();
    let cfg_counts = ok(d, &["param-count", "--config", "small.cfg"]);
    assert!(cfg_counts.starts_with(&format!("separator {n} (closed form {n})")), "{cfg_counts}");
    assert!(cfg_counts.contains("mixer 88"));
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempdir().unwrap();
    let d = tmp.path();
    setup(d);

    assert_eq!(code(d, &["separate", "--input", "missing.wav", "--separators", "seps"]), 3);
    assert_eq!(code(d, &["param-count", "--checkpoint", "missing.ckpt"]), 3);
    let bytes = std::fs::read(d.join("seps/bass.ckpt")).unwrap();
    std::fs::write(d.join("cut.ckpt"), &bytes[..bytes.len() - 1]).unwrap();
    assert_eq!(code(d, &["param-count", "--checkpoint", "cut.ckpt"]), 3);
    std::fs::write(d.join("bad.wav"), b"RIFF0000WAVEnope").unwrap();
    assert_eq!(code(d, &["separate", "--input", "bad.wav", "--separators", "seps"]), 3);

    std::fs::write(d.join("typo.cfg"), "stpes = 3\n").unwrap();
    assert_eq!(code(d, &["train", "--config", "typo.cfg", "--data", "data/index.csv"]), 2);
    let big = "steps = 1\nnum_blocks = 4\n";
    std::fs::write(d.join("even.cfg"), big).unwrap();
    assert_eq!(code(d, &["param-count", "--config", "even.cfg"]), 2);
    assert_eq!(code(d, &["train", "--data", "data/index.csv", "--target", "mixer"]), 2);
    assert_eq!(code(d, &["dump-tdf", "--checkpoint", "seps/bass.ckpt", "--block", "99"]), 2);
    assert_eq!(code(d, &["dump-tdf", "--checkpoint", "seps/bass.ckpt", "--block", "enc9.tdf"]), 2);
    assert_eq!(code(d, &["gen-data", "--songs", "0", "--out", "x"]), 2);
    assert_eq!(code(d, &["separate", "--input", "data/song_000/mixture.wav", "--separators", "seps", "--blend", "1.5"]), 2);
    // Separators trained on stereo reject a mono file unless it is widened.
    ok(d, &["gen-data", "--songs", "1", "--duration", "0.5", "--rate", "8000", "--channels", "1", "--out", "mono"]);
    assert_eq!(code(d, &["separate", "--input", "mono/song_000/mixture.wav", "--separators", "seps"]), 2);
    ok(d, &["separate", "--input", "mono/song_000/mixture.wav", "--separators", "seps", "--to-stereo", "--out", "m"]);
}
