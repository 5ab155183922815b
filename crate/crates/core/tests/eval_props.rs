mod common;

use common::*;
use mdxnet_core::dsp::Waveform;
use mdxnet_core::eval::*;
use mdxnet_core::model::{Module, UNetV2, UNetV2Config};
use mdxnet_core::pipeline::{SourceName, SourceSet};
use mdxnet_core::train::Song;
use proptest::prelude::*;

fn scaled(w: &Waveform, c: f64) -> Waveform {
    Waveform::new(w.channels(), w.samples().iter().map(|v| v * c).collect(), w.sample_rate()).unwrap()
}

fn insertion_median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s: Vec<f64> = Vec::new();
    for &x in v {
        let i = s.iter().position(|&y| y > x).unwrap_or(s.len());
        s.insert(i, x);
    }
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

#[test]
fn half_amplitude_estimate_scores_six_db() {
    let r = random_wave(&mut rng(1), 2, 4000, 8000);
    let db = sdr(&r, &scaled(&r, 0.5)).unwrap();
    assert!((db - 6.0206).abs() < 1e-3, "{db}");
    assert!((db - 20.0 * 2f64.log10()).abs() < 1e-9);
}

#[test]
fn scale_sensitivity_follows_the_closed_form() {
    let r = random_wave(&mut rng(2), 1, 3000, 8000);
    for c in [0.5, 0.9, 2.0] {
        let db = sdr(&r, &scaled(&r, c)).unwrap();
        let want = -20.0 * (1.0f64 - c).abs().log10();
        assert!((db - want).abs() < 1e-9, "c = {c}: {db} vs {want}");
    }
}

#[test]
fn perfect_and_silent_cases() {
    let r = random_wave(&mut rng(3), 2, 100, 8000);
    assert_eq!(sdr(&r, &r).unwrap(), SDR_CAP_DB);
    let z = Waveform::zeros(2, 100, 8000);
    assert!(sdr(&r, &z).unwrap().abs() < 1e-9);
    assert_eq!(sdr(&z, &z).unwrap(), 0.0);
    assert!(sdr(&Waveform::zeros(1, 0, 8000), &Waveform::zeros(1, 0, 8000)).is_err());
    assert!(sdr(&r, &Waveform::zeros(2, 99, 8000)).is_err());
}

#[test]
fn median_examples() {
    assert_eq!(median(&[]), None);
    assert_eq!(median(&[3.0]), Some(3.0));
    assert_eq!(median(&[1.0, 4.0]), Some(2.5));
    assert_eq!(median(&[5.0, 1.0, 3.0]), Some(3.0));
    assert_eq!(median(&[2.0, 8.0, 1.0, 9.0]), Some(5.0));
}

#[test]
fn constant_quality_frames_share_one_score() {
    let r = random_wave(&mut rng(4), 2, 8000 * 3 + 123, 8000);
    let f = framewise_sdr(&r, &scaled(&r, 1.1), 0.5).unwrap();
    assert_eq!(f.frames_total, 7);
    assert_eq!(f.frames_used, 7);
    assert!((f.median_db.unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn silent_frames_are_skipped() {
    let mut r = random_wave(&mut rng(5), 1, 400, 100);
    for v in &mut r.samples_mut()[100..300] {
        *v = 0.0;
    }
    let e = scaled(&r, 0.5);
    let f = framewise_sdr(&r, &e, 1.0).unwrap();
    assert_eq!((f.frames_used, f.frames_total), (2, 4));
    let z = Waveform::zeros(1, 400, 100);
    let none = framewise_sdr(&z, &e, 1.0).unwrap();
    assert_eq!(none.median_db, None);
    assert_eq!(none.frames_used, 0);
}

#[test]
fn frame_length_rounds_and_validates() {
    assert_eq!(frame_len(1.0, 44_100).unwrap(), 44_100);
    assert_eq!(frame_len(0.5, 8001).unwrap(), 4001);
    assert!(frame_len(0.0, 8000).is_err());
    assert!(frame_len(f64::NAN, 8000).is_err());
}

fn synth_songs(n: usize) -> Vec<Song> {
    let spec = SynthSpec {
        num_songs: n,
        duration_seconds: 2.0,
        sample_rate: 8000,
        channels: 2,
        seed: 3,
    };
    (0..n).map(|i| gen_synth_song(&spec, i).unwrap()).collect()
}

#[test]
fn perfect_separation_reaches_the_cap() {
    let songs = synth_songs(2);
    let report = evaluate_with(&songs, 1.0, |m| {
        let s = songs.iter().find(|s| &s.mixture() == m).unwrap();
        Ok(s.stems.clone())
    })
    .unwrap();
    assert_eq!(report.song_count(), 2);
    for s in SourceName::ALL {
        assert_eq!(report.source_median(s), Some(SDR_CAP_DB));
    }
}

#[test]
fn single_song_report_median_is_that_song() {
    let songs = synth_songs(1);
    let report = evaluate_with(&songs, 0.5, |m| {
        let q = scaled(m, 0.25);
        Ok(SourceSet::new([q.clone(), q.clone(), q.clone(), q]).unwrap())
    })
    .unwrap();
    for s in SourceName::ALL {
        assert_eq!(report.source_median(s), report.songs[0].get(s).median_db);
    }
}

#[test]
fn report_rows_are_sorted_by_song() {
    let songs = synth_songs(3);
    let mut rev = songs.clone();
    rev.reverse();
    let report = evaluate_with(&rev, 1.0, |m| {
        Ok(SourceSet::new([(); 4].map(|_| m.clone())).unwrap())
    })
    .unwrap();
    let names: Vec<&str> = report.songs.iter().map(|s| s.song.as_str()).collect();
    assert_eq!(names, vec!["song_000", "song_001", "song_002"]);
}

#[test]
fn default_recipes_are_decorrelated() {
    let spec = SynthSpec::default();
    for i in 0..spec.num_songs {
        let stems = gen_synth_stems(&spec, i).unwrap();
        assert_eq!(stems.len(), spec.len());
        assert!(max_cross_correlation(&stems) < DECORRELATION_LIMIT);
    }
}

#[test]
fn synth_is_deterministic_and_song_specific() {
    let spec = SynthSpec {
        duration_seconds: 1.0,
        sample_rate: 8000,
        ..SynthSpec::default()
    };
    assert_eq!(gen_synth_stems(&spec, 0).unwrap(), gen_synth_stems(&spec, 0).unwrap());
    assert_ne!(gen_synth_stems(&spec, 0).unwrap(), gen_synth_stems(&spec, 1).unwrap());
    let s = gen_synth_song(&spec, 7).unwrap();
    assert_eq!(s.name, "song_007");
    for w in s.stems.stems() {
        assert!(w.samples().iter().all(|v| (v / SAMPLE_GRID).fract() == 0.0));
        assert!(w.samples().iter().any(|&v| v != 0.0));
    }
}

#[test]
fn composed_tdf_matches_brute_force_product() {
    let net = UNetV2::build(UNetV2Config::desk(), 4).unwrap();
    let block = &net.tdf_blocks()[1];
    let (bins, m) = tdf_composed(&net, block.name()).unwrap();
    let p = block.parameters();
    let (w1, w2) = (p[0].tensor(), p[2].tensor());
    let h = w1.shape()[0];
    assert_eq!(bins, w1.shape()[1]);
    for i in 0..bins {
        for j in 0..bins {
            let mut s = 0.0;
            for k in 0..h {
                s += w2.data()[i * h + k] * w1.data()[k * bins + j];
            }
            assert!((m[i * bins + j] - s).abs() < 1e-12);
        }
    }
    let err = tdf_composed(&net, "nope").unwrap_err().to_string();
    assert!(err.contains(net.tdf_blocks()[0].name()), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn median_matches_sorting_oracle(v in prop::collection::vec(-1e3f64..1e3, 0..40)) {
        prop_assert_eq!(median(&v), insertion_median(&v));
    }

    #[test]
    fn sdr_is_invariant_to_joint_scaling(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut r = rng(seed);
        let a = random_wave(&mut r, 2, 200, 8000);
        let e = random_wave(&mut r, 2, 200, 8000);
        let base = sdr(&a, &e).unwrap();
        let s = sdr(&scaled(&a, k), &scaled(&e, k)).unwrap();
        prop_assert!((base - s).abs() < 1e-6);
    }

    #[test]
    fn framewise_counts_cover_the_signal(len in 1usize..3000, secs in 0.01f64..0.5) {
        let r = random_wave(&mut rng(len as u64), 1, len, 1000);
        let f = framewise_sdr(&r, &r, secs).unwrap();
        let fl = frame_len(secs, 1000).unwrap();
        prop_assert_eq!(f.frames_total, len.div_ceil(fl));
    }
}
