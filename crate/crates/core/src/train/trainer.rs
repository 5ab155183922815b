use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{TrainConfig, TrainTarget};
use super::data::{mix_instruments, sample_chunk, StemDataset};
use super::loss::{l1_distance, l1_time_loss};
use super::rmsprop::RmsProp;
use crate::dsp::{StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::model::{Mixer, Module, UNetV2, UNetV2Config};
use crate::pipeline::{SeparatorBundle, Separator, SourceName, SourceSet};
use crate::tensor::Tape;

const DATA_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const VAL_STREAM: u64 = 0xd1b5_4a32_d192_ed03;

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Step-indexed losses. Training steps count from 1; validation entries
/// include step 0 (before any update) when validation is enabled.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub train: Vec<(usize, f64)>,
    pub validation: Vec<(usize, f64)>,
}

impl TrainLog {
    pub fn last_train(&self) -> Option<f64> {
        self.train.last().map(|&(_, l)| l)
    }

    fn last_finite(&self) -> Option<f64> {
        self.train.iter().rev().map(|&(_, l)| l).find(|l| l.is_finite())
    }
}

fn check_finite(loss: f64, step: usize, log: &TrainLog) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            last_finite: log.last_finite(),
        })
    }
}

/// Single-source training loop over one separator.
pub struct SeparatorTrainer<'a> {
    data: &'a StemDataset,
    cfg: TrainConfig,
    source: SourceName,
    separator: Separator,
    opt: RmsProp,
    rng: ChaCha8Rng,
    val: Vec<(Waveform, Waveform)>,
    step: usize,
    log: TrainLog,
}

impl<'a> SeparatorTrainer<'a> {
    pub fn new(data: &'a StemDataset, cfg: TrainConfig, separator: Separator) -> Result<Self> {
        cfg.validate()?;
        let TrainTarget::Source(source) = cfg.target else {
            return Err(Error::config("separator training needs a source target, not the mixer"));
        };
        if data.audio_channels() != separator.audio_channels() {
            return Err(Error::contract(alloc::format!(
                "dataset has {} channels, separator expects {}",
                data.audio_channels(),
                separator.audio_channels()
            )));
        }
        let chunk = separator.chunk_len();
        let mut vrng = stream(cfg.seed, VAL_STREAM);
        let val = if cfg.val_every > 0 {
            (0..cfg.val_chunks)
                .map(|_| sample_chunk(data, source, chunk, &mut vrng))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let mut t = SeparatorTrainer {
            data,
            cfg,
            source,
            separator,
            opt: RmsProp::new(cfg.learning_rate, cfg.rms_alpha, cfg.rms_eps),
            rng: stream(cfg.seed, DATA_STREAM),
            val,
            step: 0,
            log: TrainLog::default(),
        };
        if t.cfg.val_every > 0 && !t.val.is_empty() {
            let v = t.validate()?;
            t.log.validation.push((0, v));
        }
        Ok(t)
    }

    pub fn separator(&self) -> &Separator {
        &self.separator
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn draw(&mut self) -> Result<(Waveform, Waveform)> {
        let chunk = self.separator.chunk_len();
        if self.cfg.mix_instruments {
            mix_instruments(self.data, self.source, chunk, &mut self.rng)
        } else {
            sample_chunk(self.data, self.source, chunk, &mut self.rng)
        }
    }

    /// One optimiser update on `batch_size` fresh chunks; returns the mean
    /// loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.cfg.batch_size;
        let scale = 1.0 / batch as f64;
        self.separator.net_mut().zero_grad();
        let mut total = 0.0;
        for _ in 0..batch {
            let (mix, target) = self.draw()?;
            let mut tape = Tape::new();
            let x = tape.constant(mix.to_tensor());
            let y = self.separator.forward_chunk(&mut tape, x)?;
            let t = tape.constant(target.to_tensor());
            let l = l1_time_loss(&mut tape, y, t)?;
            let l = tape.scale(l, scale);
            total += tape.value(l).data()[0];
            tape.backward(l)?;
            tape.write_param_grads(self.separator.net_mut())?;
        }
        self.step += 1;
        check_finite(total, self.step, &self.log)?;
        self.opt.step(self.separator.net_mut())?;
        self.log.train.push((self.step, total));
        if self.cfg.val_every > 0 && self.step.is_multiple_of(self.cfg.val_every) && !self.val.is_empty() {
            let v = self.validate()?;
            self.log.validation.push((self.step, v));
        }
        Ok(total)
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Mean l1 loss over the fixed held-out chunk list.
    pub fn validate(&self) -> Result<f64> {
        if self.val.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for (mix, target) in &self.val {
            s += l1_distance(&self.separator.separate_chunk(mix)?, target)?;
        }
        Ok(s / self.val.len() as f64)
    }

    pub fn finish(self) -> (Separator, TrainLog) {
        (self.separator, self.log)
    }
}

/// Builds a separator from `net_cfg` seeded by `cfg.seed` and trains it for
/// `cfg.steps` steps.
pub fn train_separator(
    data: &StemDataset,
    cfg: &TrainConfig,
    net_cfg: UNetV2Config,
    stft: StftConfig,
) -> Result<(Separator, TrainLog)> {
    let sep = Separator::new(UNetV2::build(net_cfg, cfg.seed)?, stft)?;
    let mut t = SeparatorTrainer::new(data, *cfg, sep)?;
    t.run(cfg.steps)?;
    Ok(t.finish())
}

struct MixerSample {
    mixture: Waveform,
    separated: SourceSet,
    targets: SourceSet,
}

/// Trains a Mixer on top of frozen separators. The separators run in
/// inference mode, so their parameters never enter a gradient tape.
pub struct MixerTrainer<'a> {
    data: &'a StemDataset,
    bundle: &'a SeparatorBundle,
    cfg: TrainConfig,
    mixer: Mixer,
    opt: RmsProp,
    rng: ChaCha8Rng,
    chunk_len: usize,
    val: Vec<MixerSample>,
    step: usize,
    log: TrainLog,
}

impl<'a> MixerTrainer<'a> {
    pub fn new(data: &'a StemDataset, cfg: TrainConfig, bundle: &'a SeparatorBundle) -> Result<Self> {
        cfg.validate()?;
        if cfg.target != TrainTarget::Mixer {
            return Err(Error::config("mixer training needs target = mixer"));
        }
        if data.audio_channels() != bundle.audio_channels() {
            return Err(Error::contract(alloc::format!(
                "dataset has {} channels, separators expect {}",
                data.audio_channels(),
                bundle.audio_channels()
            )));
        }
        let chunk_len = bundle.separators().iter().map(Separator::chunk_len).max().unwrap_or(0);
        let mut t = MixerTrainer {
            data,
            bundle,
            cfg,
            mixer: Mixer::identity(4, bundle.audio_channels()),
            opt: RmsProp::new(cfg.learning_rate, cfg.rms_alpha, cfg.rms_eps),
            rng: stream(cfg.seed, DATA_STREAM),
            chunk_len,
            val: Vec::new(),
            step: 0,
            log: TrainLog::default(),
        };
        if cfg.val_every > 0 {
            let mut vrng = stream(cfg.seed, VAL_STREAM);
            for _ in 0..cfg.val_chunks {
                let targets = data.chunk_set(chunk_len, &mut vrng)?;
                let s = t.prepare(targets)?;
                t.val.push(s);
            }
            if !t.val.is_empty() {
                let v = t.validate()?;
                t.log.validation.push((0, v));
            }
        }
        Ok(t)
    }

    fn prepare(&self, targets: SourceSet) -> Result<MixerSample> {
        let mixture = targets.mixture();
        let separated = crate::pipeline::separate_all(&mixture, self.bundle, None)?;
        Ok(MixerSample {
            mixture,
            separated,
            targets,
        })
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    fn draw(&mut self) -> Result<SourceSet> {
        if self.cfg.mix_instruments {
            self.data.mixed_chunk_set(self.chunk_len, &mut self.rng)
        } else {
            self.data.chunk_set(self.chunk_len, &mut self.rng)
        }
    }

    pub fn step(&mut self) -> Result<f64> {
        let batch = self.cfg.batch_size;
        let scale = 1.0 / batch as f64;
        self.mixer.zero_grad();
        let mut total = 0.0;
        for _ in 0..batch {
            let targets = self.draw()?;
            let sample = self.prepare(targets)?;
            let mut tape = Tape::new();
            let sources: Vec<_> = sample
                .separated
                .stems()
                .iter()
                .map(|w| tape.constant(w.to_tensor()))
                .collect();
            let m = tape.constant(sample.mixture.to_tensor());
            let outs = self.mixer.forward(&mut tape, &sources, m)?;
            let mut loss = None;
            for (o, t) in outs.into_iter().zip(sample.targets.stems()) {
                let tv = tape.constant(t.to_tensor());
                let l = l1_time_loss(&mut tape, o, tv)?;
                loss = Some(match loss {
                    None => l,
                    Some(acc) => tape.add(acc, l)?,
                });
            }
            let l = tape.scale(loss.expect("four sources"), scale);
            total += tape.value(l).data()[0];
            tape.backward(l)?;
            tape.write_param_grads(&mut self.mixer)?;
        }
        self.step += 1;
        check_finite(total, self.step, &self.log)?;
        self.opt.step(&mut self.mixer)?;
        self.log.train.push((self.step, total));
        if self.cfg.val_every > 0 && self.step.is_multiple_of(self.cfg.val_every) && !self.val.is_empty() {
            let v = self.validate()?;
            self.log.validation.push((self.step, v));
        }
        Ok(total)
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Mean over the held-out list of the summed per-source l1 loss.
    pub fn validate(&self) -> Result<f64> {
        if self.val.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for v in &self.val {
            let refined = crate::pipeline::refine(&v.separated, &v.mixture, &self.mixer)?;
            for (e, t) in refined.stems().iter().zip(v.targets.stems()) {
                s += l1_distance(e, t)?;
            }
        }
        Ok(s / self.val.len() as f64)
    }

    /// Validation loss of the separators alone, without any Mixer.
    pub fn baseline_validation(&self) -> Result<f64> {
        if self.val.is_empty() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for v in &self.val {
            for (e, t) in v.separated.stems().iter().zip(v.targets.stems()) {
                s += l1_distance(e, t)?;
            }
        }
        Ok(s / self.val.len() as f64)
    }

    pub fn finish(self) -> (Mixer, TrainLog) {
        (self.mixer, self.log)
    }
}

/// Identity-initialised Mixer trained for `cfg.steps` steps over `bundle`.
pub fn train_mixer(data: &StemDataset, cfg: &TrainConfig, bundle: &SeparatorBundle) -> Result<(Mixer, TrainLog)> {
    let mut t = MixerTrainer::new(data, *cfg, bundle)?;
    t.run(cfg.steps)?;
    Ok(t.finish())
}
