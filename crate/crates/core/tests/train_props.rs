mod common;

use common::*;
use mdxnet_core::dsp::Waveform;
use mdxnet_core::eval::{gen_synth_song, SynthSpec};
use mdxnet_core::model::{Mixer, Module};
use mdxnet_core::pipeline::{SeparatorBundle, SourceName, SourceSet};
use mdxnet_core::tensor::{Tape, Tensor};
use mdxnet_core::train::*;
use mdxnet_core::Error;
use proptest::prelude::*;

/// Each stem is a ramp tagged by song and source so a chunk reveals where it was cut.
fn ramp_dataset(songs: usize, len: usize) -> StemDataset {
    let songs = (0..songs)
        .map(|s| {
            let stems = [0usize, 1, 2, 3].map(|k| {
                let base = (s * 4 + k) as f64 * 1e6;
                Waveform::new(1, (0..len).map(|i| base + i as f64).collect(), 8000).unwrap()
            });
            Song {
                name: format!("s{s}"),
                stems: SourceSet::new(stems).unwrap(),
            }
        })
        .collect();
    StemDataset::new(songs).unwrap()
}

/// (song, source, offset) decoded from a ramp chunk.
fn decode(w: &Waveform) -> (usize, usize, usize) {
    let v = w.samples()[0];
    let tag = (v / 1e6).floor() as usize;
    (tag / 4, tag % 4, (v - tag as f64 * 1e6) as usize)
}

fn synth_data(songs: usize, seed: u64) -> StemDataset {
    let spec = SynthSpec {
        num_songs: songs,
        duration_seconds: 1.5,
        sample_rate: 8000,
        channels: 2,
        seed,
    };
    StemDataset::new((0..songs).map(|i| gen_synth_song(&spec, i).unwrap()).collect()).unwrap()
}

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 2e-3,
        steps: 3,
        batch_size: 2,
        seed,
        target: TrainTarget::Source(SourceName::Bass),
        val_every: 0,
        val_chunks: 2,
        mix_instruments: true,
        ..TrainConfig::default()
    }
}

fn flat(m: &impl Module) -> Vec<u64> {
    m.parameters().iter().flat_map(|p| bits(p.tensor().data())).collect()
}

#[test]
fn sample_chunk_is_deterministic_and_sized() {
    let d = ramp_dataset(2, 500);
    let a = sample_chunk(&d, SourceName::Drums, 123, &mut rng(4)).unwrap();
    let b = sample_chunk(&d, SourceName::Drums, 123, &mut rng(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0.len(), 123);
    assert_eq!(a.1.len(), 123);
    let (song, source, off) = decode(&a.1);
    assert_eq!(source, 1);
    for (i, v) in a.1.samples().iter().enumerate() {
        assert_eq!(*v, (song * 4 + 1) as f64 * 1e6 + (off + i) as f64);
    }
}

#[test]
fn sample_chunk_offsets_are_uniform() {
    let (len, chunk) = (1000, 100);
    let d = ramp_dataset(2, len);
    let mut r = rng(5);
    let bins = 10;
    let mut counts = vec![0usize; 2 * bins];
    let draws = 20_000;
    for _ in 0..draws {
        let (_, t) = sample_chunk(&d, SourceName::Vocals, chunk, &mut r).unwrap();
        let (song, _, off) = decode(&t);
        assert!(off <= len - chunk);
        counts[song * bins + off * bins / (len - chunk + 1)] += 1;
    }
    // Expected count per cell from the exact number of offsets it holds.
    let n_off = len - chunk + 1;
    let mut chi2 = 0.0;
    for s in 0..2 {
        for b in 0..bins {
            let width = (0..n_off).filter(|o| o * bins / n_off == b).count();
            let e = draws as f64 * width as f64 / (2 * n_off) as f64;
            let o = counts[s * bins + b] as f64;
            chi2 += (o - e) * (o - e) / e;
        }
    }
    // 19 degrees of freedom, p = 0.001.
    assert!(chi2 < 43.82, "chi-square {chi2}");
}

#[test]
fn oversized_chunk_is_rejected() {
    let d = ramp_dataset(2, 300);
    assert!(matches!(sample_chunk(&d, SourceName::Bass, 301, &mut rng(0)), Err(Error::Contract(_))));
    assert!(matches!(mix_instruments(&d, SourceName::Bass, 301, &mut rng(0)), Err(Error::Contract(_))));
    assert!(sample_chunk(&d, SourceName::Bass, 300, &mut rng(0)).is_ok());
}

#[test]
fn empty_or_mismatched_datasets_are_rejected() {
    assert!(StemDataset::new(vec![]).is_err());
    let a = ramp_dataset(1, 10).songs()[0].clone();
    let mut b = a.clone();
    b.stems = SourceSet::new([(); 4].map(|_| Waveform::zeros(1, 10, 16000))).unwrap();
    assert!(StemDataset::new(vec![a, b]).is_err());
}

#[test]
fn mixing_with_one_song_is_plain_sampling() {
    let d = ramp_dataset(1, 400);
    for seed in 0..5 {
        let a = mix_instruments(&d, SourceName::Other, 50, &mut rng(seed)).unwrap();
        let b = sample_chunk(&d, SourceName::Other, 50, &mut rng(seed)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn mixed_stems_come_from_independent_positions() {
    let d = ramp_dataset(3, 400);
    let mut r = rng(6);
    let mut differing = 0;
    for _ in 0..50 {
        let set = d.mixed_chunk_set(40, &mut r).unwrap();
        let pos: Vec<_> = set.stems().iter().map(decode).collect();
        for (k, p) in pos.iter().enumerate() {
            assert_eq!(p.1, k);
        }
        if pos.iter().any(|p| (p.0, p.2) != (pos[0].0, pos[0].2)) {
            differing += 1;
        }
        let m = set.mixture();
        let s = set.stems();
        for i in 0..40 {
            let want = (s[0].samples()[i] + s[1].samples()[i]) + (s[2].samples()[i] + s[3].samples()[i]);
            assert_eq!(m.samples()[i], want);
        }
    }
    assert!(differing >= 45);
}

#[test]
fn mixture_of_a_plain_chunk_matches_the_song_mixture() {
    let d = synth_data(2, 3);
    let (mix, _) = sample_chunk(&d, SourceName::Vocals, 500, &mut rng(9)).unwrap();
    let found = d.songs().iter().any(|s| {
        let full = s.mixture();
        (0..=full.len() - 500).any(|o| full.segment(o, 500) == mix)
    });
    assert!(found);
}

#[test]
fn l1_examples() {
    let a = Waveform::new(1, vec![1.0, -2.0, 3.0], 8000).unwrap();
    let z = Waveform::zeros(1, 3, 8000);
    assert_eq!(l1_distance(&a, &z).unwrap(), 2.0);
    assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
    assert!(l1_distance(&a, &Waveform::zeros(1, 4, 8000)).is_err());
}

#[test]
fn l1_gradient_is_sign_over_count() {
    let est = Tensor::new([2, 3], vec![1.0, -1.0, 0.5, 2.0, 0.0, -3.0]).unwrap();
    let tgt = Tensor::new([2, 3], vec![0.0, 0.0, 1.0, 1.0, 1.0, -4.0]).unwrap();
    let mut tape = Tape::new();
    let e = tape.leaf(est.clone());
    let t = tape.constant(tgt.clone());
    let l = l1_time_loss(&mut tape, e, t).unwrap();
    let mean: f64 = est.data().iter().zip(tgt.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 6.0;
    assert_eq!(mean, 5.5 / 6.0);
    assert!((tape.value(l).data()[0] - mean).abs() < 1e-15);
    tape.backward(l).unwrap();
    let g = tape.grad(e).unwrap().to_vec();
    let want: Vec<f64> = est.data().iter().zip(tgt.data()).map(|(a, b)| (a - b).signum() / 6.0).collect();
    assert_eq!(g, want);
    let bad = tape.constant(Tensor::zeros([3, 2]));
    assert!(matches!(l1_time_loss(&mut tape, e, bad), Err(Error::Contract(_))));
}

#[test]
fn zero_steps_leave_the_initial_network() {
    let d = synth_data(2, 1);
    let sep = small_separator(3);
    let init = flat(sep.net());
    let mut t = SeparatorTrainer::new(&d, quick_cfg(0), sep).unwrap();
    t.run(0).unwrap();
    let (sep, log) = t.finish();
    assert_eq!(flat(sep.net()), init);
    assert!(log.train.is_empty());
}

#[test]
fn training_is_seed_deterministic() {
    let d = synth_data(2, 1);
    let run = |seed| {
        let mut t = SeparatorTrainer::new(&d, quick_cfg(seed), small_separator(1)).unwrap();
        t.run(3).unwrap();
        let (s, log) = t.finish();
        (flat(s.net()), log)
    };
    let (a, la) = run(11);
    let (b, lb) = run(11);
    let (c, _) = run(12);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_ne!(a, c);
    assert_eq!(la.train.iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn train_separator_builds_from_the_seed() {
    let d = synth_data(1, 2);
    let cfg = TrainConfig { steps: 2, ..quick_cfg(5) };
    let (a, _) = train_separator(&d, &cfg, small_net(), small_stft()).unwrap();
    let (b, _) = train_separator(&d, &cfg, small_net(), small_stft()).unwrap();
    assert_eq!(flat(a.net()), flat(b.net()));
}

#[test]
fn trainer_rejects_bad_setups() {
    let d = synth_data(1, 2);
    let mixer_target = TrainConfig {
        target: TrainTarget::Mixer,
        ..quick_cfg(0)
    };
    assert!(matches!(SeparatorTrainer::new(&d, mixer_target, small_separator(0)), Err(Error::Config(_))));
    let zero_lr = TrainConfig {
        learning_rate: 0.0,
        ..quick_cfg(0)
    };
    assert!(matches!(SeparatorTrainer::new(&d, zero_lr, small_separator(0)), Err(Error::Config(_))));
    let bundle = SeparatorBundle::new([0, 1, 2, 3].map(small_separator)).unwrap();
    assert!(matches!(MixerTrainer::new(&d, quick_cfg(0), &bundle), Err(Error::Config(_))));
}

#[test]
fn validation_loss_goes_down() {
    let d = synth_data(2, 4);
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 2,
        val_every: 10,
        val_chunks: 3,
        mix_instruments: false,
        ..quick_cfg(2)
    };
    let mut t = SeparatorTrainer::new(&d, cfg, small_separator(2)).unwrap();
    t.run(40).unwrap();
    let v = &t.log().validation;
    assert_eq!(v.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 10, 20, 30, 40]);
    assert!(v[4].1 < v[0].1, "{v:?}");
}

#[test]
fn divergence_reports_step_and_last_finite_loss() {
    let d = synth_data(1, 2);
    let cfg = TrainConfig {
        learning_rate: 1e200,
        ..quick_cfg(0)
    };
    let mut t = SeparatorTrainer::new(&d, cfg, small_separator(0)).unwrap();
    let first = t.step().unwrap();
    let mut err = None;
    for _ in 0..5 {
        if let Err(e) = t.step() {
            err = Some(e);
            break;
        }
    }
    match err {
        Some(Error::NonFinite { step, last_finite }) => {
            assert!(step >= 2);
            assert!(last_finite.is_some());
            if step == 2 {
                assert_eq!(last_finite, Some(first));
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn mixer_training_leaves_separators_alone() {
    let d = synth_data(2, 5);
    let bundle = SeparatorBundle::new([0, 1, 2, 3].map(small_separator)).unwrap();
    let before: Vec<_> = bundle.separators().iter().map(|s| flat(s.net())).collect();
    let cfg = TrainConfig {
        target: TrainTarget::Mixer,
        val_every: 2,
        ..quick_cfg(3)
    };
    let mut t = MixerTrainer::new(&d, cfg, &bundle).unwrap();
    let v0 = t.log().validation[0];
    assert_eq!(v0.0, 0);
    assert!((v0.1 - t.baseline_validation().unwrap()).abs() < 1e-12);
    t.run(4).unwrap();
    let (mixer, log) = t.finish();
    assert_ne!(flat(&mixer), flat(&Mixer::identity(4, 2)));
    assert_eq!(log.validation.len(), 3);
    let after: Vec<_> = bundle.separators().iter().map(|s| flat(s.net())).collect();
    assert_eq!(before, after);
}

#[test]
fn train_mixer_is_deterministic() {
    let d = synth_data(2, 6);
    let bundle = SeparatorBundle::new([0, 1, 2, 3].map(small_separator)).unwrap();
    let cfg = TrainConfig {
        target: TrainTarget::Mixer,
        steps: 2,
        ..quick_cfg(4)
    };
    let (a, la) = train_mixer(&d, &cfg, &bundle).unwrap();
    let (b, lb) = train_mixer(&d, &cfg, &bundle).unwrap();
    assert_eq!(flat(&a), flat(&b));
    assert_eq!(la, lb);
}

#[test]
fn rmsprop_single_step_example() {
    let mut p = vec![1.0];
    let mut v = vec![0.0];
    rmsprop_update(&mut p, &[1.0], &mut v, 1e-3, 0.9, 1e-8);
    assert!((p[0] - (1.0 - 1e-3 / (0.1f64.sqrt() + 1e-8))).abs() < 1e-15);
    assert!((v[0] - 0.1).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rmsprop_matches_recurrence(g in prop::collection::vec(-5.0f64..5.0, 1..6), lr in 1e-4f64..1e-1, alpha in 0.0f64..0.99) {
        let eps = 1e-8;
        let mut p = vec![0.5];
        let mut v = vec![0.0];
        let (mut po, mut vo) = (0.5f64, 0.0f64);
        for &gi in &g {
            rmsprop_update(&mut p, &[gi], &mut v, lr, alpha, eps);
            vo = alpha * vo + (1.0 - alpha) * gi * gi;
            po -= lr * gi / (vo.sqrt() + eps);
        }
        prop_assert!((p[0] - po).abs() < 1e-12);
        prop_assert!((v[0] - vo).abs() < 1e-12);
    }

    #[test]
    fn sampled_chunks_stay_in_bounds(seed in any::<u64>(), chunk in 1usize..300) {
        let d = ramp_dataset(3, 300);
        let (_, t) = sample_chunk(&d, SourceName::Bass, chunk, &mut rng(seed)).unwrap();
        let (song, source, off) = decode(&t);
        prop_assert!(song < 3);
        prop_assert_eq!(source, 2);
        prop_assert!(off + chunk <= 300);
    }
}
