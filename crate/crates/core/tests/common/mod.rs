#![allow(dead_code)]

use mdxnet_core::dsp::Waveform;
use mdxnet_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Uniform in [-1, 1] but at least `gap` away from zero.
pub fn away_from_zero(r: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = r.random_range(gap..1.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

pub fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), random_vec(r, n)).unwrap()
}

pub fn random_wave(r: &mut ChaCha8Rng, channels: usize, len: usize, rate: u32) -> Waveform {
    Waveform::new(channels, random_vec(r, channels * len), rate).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn bits(a: &[f64]) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

pub fn small_net() -> mdxnet_core::model::UNetV2Config {
    use mdxnet_core::model::{ChannelPlan, SkipKind, UNetV2Config};
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

pub fn small_stft() -> mdxnet_core::dsp::StftConfig {
    mdxnet_core::dsp::StftConfig::new(256, 64, 32).unwrap()
}

/// Small separator with random output biases so silence does not map to silence.
pub fn small_separator(seed: u64) -> mdxnet_core::pipeline::Separator {
    use mdxnet_core::model::{Module, UNetV2};
    let mut net = UNetV2::build(small_net(), seed).unwrap();
    let mut r = rng(seed ^ 0x55);
    for p in net.parameters_mut() {
        if p.name().ends_with(".b2") {
            let n = p.numel();
            p.assign(&random_vec(&mut r, n)).unwrap();
        }
    }
    mdxnet_core::pipeline::Separator::new(net, small_stft()).unwrap()
}
