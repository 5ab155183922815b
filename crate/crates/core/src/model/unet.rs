use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blocks::{TdfBlock, TfcTdfBlock};
use super::init::he_uniform;
use crate::error::{Error, Result};
use crate::tensor::{Module, Parameter, Tape, Tensor, Var};

/// How decoder stages combine the upsampled signal with the saved encoder
/// activation at the same scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SkipKind {
    /// Elementwise product; the decoder block sees `width(k)` channels.
    Multiply,
    /// Channel concatenation; the decoder block sees `2 * width(k)` channels.
    Concat,
}

/// Channel width as a function of scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelPlan {
    /// `growth * (k + 1)` at scale `k`.
    Linear,
    /// `growth` at every scale.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UNetV2Config {
    /// Encoder blocks + bottleneck + decoder blocks; must be odd.
    pub num_blocks: usize,
    pub convs_per_block: usize,
    /// TDF bottleneck factor.
    pub bn: usize,
    pub dim_f: usize,
    pub dim_t: usize,
    pub growth: usize,
    /// Twice the audio channel count (real and imaginary planes).
    pub in_channels: usize,
    pub skip: SkipKind,
    pub channels: ChannelPlan,
}

impl UNetV2Config {
    /// 11 blocks, 3 convs per block, bn 8, 2048 bins x 256 frames, growth 32, stereo.
    pub fn full() -> Self {
        UNetV2Config {
            num_blocks: 11,
            convs_per_block: 3,
            bn: 8,
            dim_f: 2048,
            dim_t: 256,
            growth: 32,
            in_channels: 4,
            skip: SkipKind::Multiply,
            channels: ChannelPlan::Linear,
        }
    }

    /// Deeper, narrower baseline layout: 9 blocks of 5 convs, bn 16,
    /// 2048 x 128, constant width and concatenated skips.
    pub fn v1_baseline() -> Self {
        UNetV2Config {
            num_blocks: 9,
            convs_per_block: 5,
            bn: 16,
            dim_f: 2048,
            dim_t: 128,
            growth: 32,
            in_channels: 4,
            skip: SkipKind::Concat,
            channels: ChannelPlan::Constant,
        }
    }

    /// Small network that trains in seconds: 5 blocks, growth 4, 64 x 32.
    pub fn desk() -> Self {
        UNetV2Config {
            num_blocks: 5,
            convs_per_block: 3,
            bn: 8,
            dim_f: 64,
            dim_t: 32,
            growth: 4,
            in_channels: 4,
            skip: SkipKind::Multiply,
            channels: ChannelPlan::Linear,
        }
    }

    pub fn depth(&self) -> usize {
        (self.num_blocks.max(1) - 1) / 2
    }

    pub fn width(&self, scale: usize) -> usize {
        match self.channels {
            ChannelPlan::Linear => self.growth * (scale + 1),
            ChannelPlan::Constant => self.growth,
        }
    }

    pub fn bins_at(&self, scale: usize) -> usize {
        self.dim_f >> scale
    }

    pub fn frames_at(&self, scale: usize) -> usize {
        self.dim_t >> scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks.is_multiple_of(2) {
            return Err(Error::config(format!("num_blocks must be odd, got {}", self.num_blocks)));
        }
        if self.convs_per_block == 0 {
            return Err(Error::config("convs_per_block must be at least 1"));
        }
        if self.bn == 0 || self.growth == 0 || self.in_channels == 0 {
            return Err(Error::config("bn, growth and in_channels must be positive"));
        }
        let step = 1usize << self.depth();
        if self.dim_f == 0 || !self.dim_f.is_multiple_of(step) {
            return Err(Error::config(format!(
                "dim_f {} is not divisible by 2^depth = {step}",
                self.dim_f
            )));
        }
        if self.dim_t == 0 || !self.dim_t.is_multiple_of(step) {
            return Err(Error::config(format!(
                "dim_t {} is not divisible by 2^depth = {step}",
                self.dim_t
            )));
        }
        Ok(())
    }

    /// Parameter count without building the network:
    ///
    /// ```text
    /// tfc(ci, co)  = 9 (ci co + (n - 1) co^2)
    /// tdf(F)       = 2 F h + h + F,   h = ceil(F / bn)
    /// total        = in w0 + w0 in                               (1x1 entry, exit)
    ///              + sum_{k<d} [tfc(w_k, w_k) + tdf(F_k) + 4 w_k w_{k+1}]   (encoder)
    ///              + tfc(w_d, w_d) + tdf(F_d)                     (bottleneck)
    ///              + sum_{k<d} [4 w_{k+1} w_k + tfc(m w_k, w_k) + tdf(F_k)] (decoder)
    /// ```
    /// with `m = 1` for multiplicative skips and `m = 2` for concatenation.
    pub fn closed_form_param_count(&self) -> usize {
        let n = self.convs_per_block;
        let tfc = |ci: usize, co: usize| 9 * (ci * co + (n - 1) * co * co);
        let tdf = |f: usize| {
            let h = TdfBlock::hidden_size(f, self.bn);
            2 * f * h + h + f
        };
        let m = match self.skip {
            SkipKind::Multiply => 1,
            SkipKind::Concat => 2,
        };
        let d = self.depth();
        let w = |k| self.width(k);
        let mut total = 2 * self.in_channels * w(0);
        for k in 0..d {
            total += tfc(w(k), w(k)) + tdf(self.bins_at(k)) + 4 * w(k) * w(k + 1);
            total += 4 * w(k + 1) * w(k) + tfc(m * w(k), w(k)) + tdf(self.bins_at(k));
        }
        total + tfc(w(d), w(d)) + tdf(self.bins_at(d))
    }
}

/// Replacement for the saved encoder activations in a decoder stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipOverride {
    None,
    /// Multiply by ones instead of the saved activation.
    Ones,
    /// Skip the U-connection entirely.
    Omit,
}

/// Shapes observed during a forward pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ForwardTrace {
    /// Saved pre-downsampling activations, shallowest first.
    pub encoder: Vec<Vec<usize>>,
    pub bottleneck: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
struct EncoderStage {
    block: TfcTdfBlock,
    down: Parameter,
}

#[derive(Clone, Debug, PartialEq)]
struct DecoderStage {
    scale: usize,
    up: Parameter,
    block: TfcTdfBlock,
}

/// Spectrogram U-Net with TFC-TDF blocks at every scale.
///
/// Layout: 1x1 entry conv, `d` encoder stages (block, then a 2x2 stride-2
/// conv that halves both axes and widens the channels), a bottleneck block,
/// `d` decoder stages (2x2 stride-2 transposed conv that narrows the
/// channels, U-connection, block) and a 1x1 exit conv back to the input
/// planes. The down/up convs are followed by relu. The output is the
/// estimated source spectrogram itself, not a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetV2 {
    cfg: UNetV2Config,
    entry: Parameter,
    encoders: Vec<EncoderStage>,
    bottleneck: TfcTdfBlock,
    decoders: Vec<DecoderStage>,
    exit: Parameter,
}

impl UNetV2 {
    /// Deterministic He-uniform initialisation from `seed`; biases start at zero.
    pub fn build(cfg: UNetV2Config, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.depth();
        let (n, bn) = (cfg.convs_per_block, cfg.bn);
        let w0 = cfg.width(0);
        let entry = Parameter::new(
            "entry.weight",
            Tensor::new([w0, cfg.in_channels, 1, 1], he_uniform(&mut rng, w0 * cfg.in_channels, cfg.in_channels))?,
        );
        let mut encoders = Vec::with_capacity(d);
        for k in 0..d {
            let (wk, wn) = (cfg.width(k), cfg.width(k + 1));
            let block = TfcTdfBlock::new(&format!("enc{k}"), wk, wk, n, cfg.bins_at(k), bn, &mut rng);
            let down = Parameter::new(
                format!("enc{k}.down"),
                Tensor::new([wn, wk, 2, 2], he_uniform(&mut rng, wn * wk * 4, wk * 4))?,
            );
            encoders.push(EncoderStage { block, down });
        }
        let wd = cfg.width(d);
        let bottleneck = TfcTdfBlock::new("bottleneck", wd, wd, n, cfg.bins_at(d), bn, &mut rng);
        let mut decoders = Vec::with_capacity(d);
        for k in (0..d).rev() {
            let (wk, wn) = (cfg.width(k), cfg.width(k + 1));
            // Each output of a stride-2 2x2 transposed conv sees one tap per input channel.
            let up = Parameter::new(
                format!("dec{k}.up"),
                Tensor::new([wn, wk, 2, 2], he_uniform(&mut rng, wn * wk * 4, wn))?,
            );
            let c_in = match cfg.skip {
                SkipKind::Multiply => wk,
                SkipKind::Concat => 2 * wk,
            };
            let block = TfcTdfBlock::new(&format!("dec{k}"), c_in, wk, n, cfg.bins_at(k), bn, &mut rng);
            decoders.push(DecoderStage { scale: k, up, block });
        }
        let exit = Parameter::new(
            "exit.weight",
            Tensor::new([cfg.in_channels, w0, 1, 1], he_uniform(&mut rng, cfg.in_channels * w0, w0))?,
        );
        Ok(UNetV2 {
            cfg,
            entry,
            encoders,
            bottleneck,
            decoders,
            exit,
        })
    }

    pub fn config(&self) -> &UNetV2Config {
        &self.cfg
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.cfg.in_channels, self.cfg.dim_f, self.cfg.dim_t]
    }

    /// Bottleneck activation shape derived from the built layers.
    pub fn bottleneck_shape(&self) -> [usize; 3] {
        let mut bins = self.cfg.dim_f;
        let mut frames = self.cfg.dim_t;
        let mut ch = self.entry.shape()[0];
        for e in &self.encoders {
            let k = e.down.shape();
            ch = k[0];
            bins = (bins - k[2]) / 2 + 1;
            frames = (frames - k[3]) / 2 + 1;
        }
        debug_assert_eq!(ch, self.bottleneck.tfc.out_channels());
        [self.bottleneck.tfc.out_channels(), bins, frames]
    }

    /// Every TDF block with its name, in parameter order.
    pub fn tdf_blocks(&self) -> Vec<&TdfBlock> {
        let mut v: Vec<&TdfBlock> = self.encoders.iter().map(|e| &e.block.tdf).collect();
        v.push(&self.bottleneck.tdf);
        v.extend(self.decoders.iter().map(|d| &d.block.tdf));
        v
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_with(tape, x, SkipOverride::None).map(|(y, _)| y)
    }

    pub fn forward_with(&self, tape: &mut Tape, x: Var, skips: SkipOverride) -> Result<(Var, ForwardTrace)> {
        let want = self.input_shape();
        if tape.shape(x) != want {
            return Err(Error::Dimension {
                op: "unet_forward (expected [in_channels, dim_f, dim_t])",
                lhs: tape.shape(x).into(),
                rhs: want.into(),
            });
        }
        let mut trace = ForwardTrace::default();
        let entry = tape.param(&self.entry);
        let mut h = tape.conv2d(x, entry, (1, 1), (0, 0))?;
        let mut saved = Vec::with_capacity(self.encoders.len());
        for e in &self.encoders {
            h = e.block.forward(tape, h)?;
            trace.encoder.push(tape.shape(h).into());
            saved.push(h);
            let down = tape.param(&e.down);
            let y = tape.conv2d(h, down, (2, 2), (0, 0))?;
            h = tape.relu(y);
        }
        h = self.bottleneck.forward(tape, h)?;
        trace.bottleneck = tape.shape(h).into();
        for d in &self.decoders {
            let up = tape.param(&d.up);
            let y = tape.conv_transpose2d(h, up, (2, 2))?;
            let y = tape.relu(y);
            let skip = saved[d.scale];
            h = match (self.cfg.skip, skips) {
                (_, SkipOverride::Omit) => y,
                (SkipKind::Multiply, SkipOverride::None) => tape.hadamard(y, skip)?,
                (SkipKind::Multiply, SkipOverride::Ones) => {
                    let ones = tape.constant(Tensor::ones(tape.shape(skip)));
                    tape.hadamard(y, ones)?
                }
                (SkipKind::Concat, SkipOverride::None) => tape.concat0(&[y, skip])?,
                (SkipKind::Concat, SkipOverride::Ones) => {
                    let ones = tape.constant(Tensor::ones(tape.shape(skip)));
                    tape.concat0(&[y, ones])?
                }
            };
            h = d.block.forward(tape, h)?;
        }
        let exit = tape.param(&self.exit);
        let out = tape.conv2d(h, exit, (1, 1), (0, 0))?;
        Ok((out, trace))
    }

    /// Inference on a plain spectrogram tensor.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }
}

impl Module for UNetV2 {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.entry];
        for e in &self.encoders {
            v.extend(e.block.parameters());
            v.push(&e.down);
        }
        v.extend(self.bottleneck.parameters());
        for d in &self.decoders {
            v.push(&d.up);
            v.extend(d.block.parameters());
        }
        v.push(&self.exit);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.entry];
        for e in &mut self.encoders {
            v.extend(e.block.parameters_mut());
            v.push(&mut e.down);
        }
        v.extend(self.bottleneck.parameters_mut());
        for d in &mut self.decoders {
            v.push(&mut d.up);
            v.extend(d.block.parameters_mut());
        }
        v.push(&mut self.exit);
        v
    }
}
