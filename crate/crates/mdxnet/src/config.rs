//! Flat UTF-8 `key = value` files: training configs and checkpoint headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use mdxnet_core::dsp::{StftConfig, Window};
use mdxnet_core::model::{ChannelPlan, SkipKind, UNetV2Config};
use mdxnet_core::train::{TrainConfig, TrainTarget};
use mdxnet_core::Error as CoreError;

use crate::error::{MdxError, Result};

/// Ordered key/value pairs with unique keys.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`, got {line:?}", n + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("line {}: duplicate key {k:?}", n + 1));
            }
        }
        Ok(KeyValues { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MdxError::io(path, e))?;
        Self::parse(&text).map_err(|m| MdxError::format(path, m))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.map {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> std::result::Result<Option<T>, CoreError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CoreError::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> std::result::Result<T, CoreError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn check_known(&self, known: &[&str]) -> std::result::Result<(), CoreError> {
        for k in self.keys() {
            if !known.contains(&k) {
                return Err(CoreError::Config(format!("unknown key {k:?}")));
            }
        }
        Ok(())
    }
}

pub const NET_KEYS: [&str; 12] = [
    "num_blocks",
    "convs_per_block",
    "bn",
    "dim_f",
    "dim_t",
    "growth",
    "audio_channels",
    "skip",
    "channel_plan",
    "n_fft",
    "hop",
    "window",
];

const TRAIN_KEYS: [&str; 11] = [
    "seed",
    "target",
    "learning_rate",
    "rms_alpha",
    "rms_eps",
    "steps",
    "batch_size",
    "val_every",
    "val_chunks",
    "mix_instruments",
    "pitch_time_augment",
];

const EVAL_KEYS: [&str; 1] = ["frame_seconds"];

fn skip_name(s: SkipKind) -> &'static str {
    match s {
        SkipKind::Multiply => "multiply",
        SkipKind::Concat => "concat",
    }
}

fn plan_name(p: ChannelPlan) -> &'static str {
    match p {
        ChannelPlan::Linear => "linear",
        ChannelPlan::Constant => "constant",
    }
}

/// Writes the network and STFT settings under [`NET_KEYS`].
pub fn put_net(kv: &mut KeyValues, net: &UNetV2Config, stft: &StftConfig) {
    kv.set("num_blocks", net.num_blocks);
    kv.set("convs_per_block", net.convs_per_block);
    kv.set("bn", net.bn);
    kv.set("dim_f", net.dim_f);
    kv.set("dim_t", net.dim_t);
    kv.set("growth", net.growth);
    kv.set("audio_channels", net.in_channels / 2);
    kv.set("skip", skip_name(net.skip));
    kv.set("channel_plan", plan_name(net.channels));
    kv.set("n_fft", stft.n_fft);
    kv.set("hop", stft.hop);
    kv.set("window", stft.window.name());
}

/// Reads [`NET_KEYS`]; missing keys fall back to `net` / `stft`.
pub fn take_net(
    kv: &KeyValues,
    net: UNetV2Config,
    stft: StftConfig,
) -> std::result::Result<(UNetV2Config, StftConfig), CoreError> {
    let skip = match kv.get("skip") {
        None => net.skip,
        Some("multiply") => SkipKind::Multiply,
        Some("concat") => SkipKind::Concat,
        Some(v) => return Err(CoreError::Config(format!("skip: expected multiply or concat, got {v:?}"))),
    };
    let channels = match kv.get("channel_plan") {
        None => net.channels,
        Some("linear") => ChannelPlan::Linear,
        Some("constant") => ChannelPlan::Constant,
        Some(v) => return Err(CoreError::Config(format!("channel_plan: expected linear or constant, got {v:?}"))),
    };
    let window = match kv.get("window") {
        None => stft.window,
        Some(v) => Window::from_name(v).ok_or_else(|| CoreError::Config(format!("window: unknown {v:?}")))?,
    };
    let audio_channels: usize = kv.or("audio_channels", net.in_channels / 2)?;
    if !(1..=2).contains(&audio_channels) {
        return Err(CoreError::Config(format!("audio_channels must be 1 or 2, got {audio_channels}")));
    }
    let net = UNetV2Config {
        num_blocks: kv.or("num_blocks", net.num_blocks)?,
        convs_per_block: kv.or("convs_per_block", net.convs_per_block)?,
        bn: kv.or("bn", net.bn)?,
        dim_f: kv.or("dim_f", net.dim_f)?,
        dim_t: kv.or("dim_t", net.dim_t)?,
        growth: kv.or("growth", net.growth)?,
        in_channels: 2 * audio_channels,
        skip,
        channels,
    };
    net.validate()?;
    let stft = StftConfig::new(kv.or("n_fft", stft.n_fft)?, kv.or("hop", stft.hop)?, net.dim_f)?.with_window(window);
    Ok((net, stft))
}

/// Everything a `train` / `train-mixer` / `eval` run reads from its config file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub net: UNetV2Config,
    pub stft: StftConfig,
    pub frame_seconds: f64,
}

/// 512-point STFT with hop 128 keeping 64 bins.
pub fn desk_stft() -> StftConfig {
    StftConfig::new(512, 128, 64).expect("valid desk STFT")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            net: UNetV2Config::desk(),
            stft: desk_stft(),
            frame_seconds: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> std::result::Result<Self, CoreError> {
        let mut known: Vec<&str> = NET_KEYS.to_vec();
        known.extend(TRAIN_KEYS);
        known.extend(EVAL_KEYS);
        kv.check_known(&known)?;
        let d = RunConfig::default();
        let (net, stft) = take_net(kv, d.net, d.stft)?;
        let target = match kv.get("target") {
            None => d.train.target,
            Some(v) => TrainTarget::parse(v)
                .ok_or_else(|| CoreError::Config(format!("target: expected a source name or mixer, got {v:?}")))?,
        };
        match kv.get("pitch_time_augment") {
            None | Some("off") => {}
            Some(v) => {
                return Err(CoreError::Config(format!(
                    "pitch_time_augment = {v} is not implemented; only `off` is accepted"
                )))
            }
        }
        let t = d.train;
        let train = TrainConfig {
            learning_rate: kv.or("learning_rate", t.learning_rate)?,
            rms_alpha: kv.or("rms_alpha", t.rms_alpha)?,
            rms_eps: kv.or("rms_eps", t.rms_eps)?,
            steps: kv.or("steps", t.steps)?,
            batch_size: kv.or("batch_size", t.batch_size)?,
            seed: kv.or("seed", t.seed)?,
            target,
            val_every: kv.or("val_every", t.val_every)?,
            val_chunks: kv.or("val_chunks", t.val_chunks)?,
            mix_instruments: kv.or("mix_instruments", t.mix_instruments)?,
        };
        train.validate()?;
        let frame_seconds: f64 = kv.or("frame_seconds", d.frame_seconds)?;
        if !(frame_seconds > 0.0 && frame_seconds.is_finite()) {
            return Err(CoreError::Config(format!("frame_seconds must be > 0, got {frame_seconds}")));
        }
        Ok(RunConfig {
            train,
            net,
            stft,
            frame_seconds,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_kv(&KeyValues::load(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_trims() {
        let kv = KeyValues::parse("# c\n\n steps = 10 \nlearning_rate=0.5\n").unwrap();
        assert_eq!(kv.get("steps"), Some("10"));
        assert_eq!(kv.get("learning_rate"), Some("0.5"));
    }

    #[test]
    fn malformed_and_duplicate_lines_are_rejected() {
        assert!(KeyValues::parse("steps 10").unwrap_err().contains("line 1"));
        assert!(KeyValues::parse("a = 1\na = 2").unwrap_err().contains("duplicate"));
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_kv(&KeyValues::default()).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let kv = KeyValues::parse("target = drums\nsteps = 3\nn_fft = 1024\nskip = concat\nmix_instruments = false").unwrap();
        let c = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(c.train.target.as_str(), "drums");
        assert_eq!(c.train.steps, 3);
        assert_eq!(c.stft.n_fft, 1024);
        assert_eq!(c.net.skip, SkipKind::Concat);
        assert!(!c.train.mix_instruments);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["learning_rate = 0", "steps = 0", "bogus = 1", "pitch_time_augment = on", "num_blocks = 4"] {
            let kv = KeyValues::parse(text).unwrap();
            assert!(RunConfig::from_kv(&kv).is_err(), "{text}");
        }
        let kv = KeyValues::parse("pitch_time_augment = off").unwrap();
        assert!(RunConfig::from_kv(&kv).is_ok());
    }

    #[test]
    fn net_keys_round_trip() {
        let mut kv = KeyValues::default();
        let stft = StftConfig::new(6144, 1024, 2048).unwrap();
        put_net(&mut kv, &UNetV2Config::full(), &stft);
        let (n, s) = take_net(&kv, UNetV2Config::desk(), desk_stft()).unwrap();
        assert_eq!((n, s), (UNetV2Config::full(), stft));
    }
}
