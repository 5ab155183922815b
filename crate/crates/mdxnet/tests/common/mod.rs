#![allow(dead_code)]

use std::path::Path;

use mdxnet::checkpoint::save_separator;
use mdxnet::dataset::{gen_synth_dataset, load_dataset};
use mdxnet_core::dsp::StftConfig;
use mdxnet_core::eval::SynthSpec;
use mdxnet_core::model::{ChannelPlan, SkipKind, UNetV2Config};
use mdxnet_core::pipeline::{SeparatorBundle, SourceName};
use mdxnet_core::train::{train_separator, TrainConfig, TrainTarget};

pub fn small_net() -> UNetV2Config {
    UNetV2Config {
        num_blocks: 3,
        convs_per_block: 1,
        bn: 4,
        dim_f: 32,
        dim_t: 16,
        growth: 4,
        in_channels: 4,
        skip: SkipKind::Multiply,
        channels: ChannelPlan::Linear,
    }
}

pub fn small_stft() -> StftConfig {
    StftConfig::new(256, 64, 32).unwrap()
}

pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_songs: 2,
        duration_seconds: 1.5,
        sample_rate: 8000,
        channels: 2,
        seed,
    }
}

pub fn quick_train(seed: u64, source: SourceName) -> TrainConfig {
    TrainConfig {
        steps: 3,
        batch_size: 2,
        seed,
        target: TrainTarget::Source(source),
        val_every: 0,
        ..TrainConfig::default()
    }
}

/// Config file text matching [`small_net`] and [`quick_train`].
pub const SMALL_CONFIG: &str = "\
num_blocks = 3
convs_per_block = 1
bn = 4
dim_f = 32
dim_t = 16
growth = 4
audio_channels = 2
n_fft = 256
hop = 64
steps = 3
batch_size = 2
val_every = 2
val_chunks = 2
frame_seconds = 0.5
";

/// Generates data under `dir/data`, trains four quick separators and saves
/// them under `dir/seps`.
pub fn quick_bundle(dir: &Path, seed: u64) -> SeparatorBundle {
    let index = gen_synth_dataset(&small_spec(seed), dir.join("data")).unwrap();
    let ds = load_dataset(&index).unwrap();
    let seps = dir.join("seps");
    std::fs::create_dir_all(&seps).unwrap();
    let trained = SourceName::ALL.map(|s| {
        let (sep, _) = train_separator(&ds, &quick_train(seed, s), small_net(), small_stft()).unwrap();
        save_separator(seps.join(format!("{s}.ckpt")), &sep).unwrap();
        sep
    });
    SeparatorBundle::new(trained).unwrap()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
