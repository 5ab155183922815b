use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::tensor::{Module, Parameter, Tape, Tensor, Var};

/// Per-sample linear map from the stacked `[sources..., mixture]` channels
/// to refined source channels, i.e. a 1x1 convolution over time.
///
/// Channel order is source-major: all channels of the first source, then the
/// second, and so on, with the mixture last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixer {
    num_sources: usize,
    audio_channels: usize,
    weight: Parameter,
    bias: Parameter,
}

impl Mixer {
    fn dims(num_sources: usize, audio_channels: usize) -> (usize, usize) {
        (num_sources * audio_channels, (num_sources + 1) * audio_channels)
    }

    /// Every source channel maps to itself; mixture weights and biases are zero.
    pub fn identity(num_sources: usize, audio_channels: usize) -> Self {
        let (out, inp) = Self::dims(num_sources, audio_channels);
        let mut w = vec![0.0; out * inp];
        for i in 0..out {
            w[i * inp + i] = 1.0;
        }
        Self::from_tensors(
            num_sources,
            audio_channels,
            Tensor::new([out, inp], w).unwrap(),
            Tensor::zeros([out]),
        )
        .unwrap()
    }

    pub fn zeros(num_sources: usize, audio_channels: usize) -> Self {
        let (out, inp) = Self::dims(num_sources, audio_channels);
        Self::from_tensors(num_sources, audio_channels, Tensor::zeros([out, inp]), Tensor::zeros([out])).unwrap()
    }

    pub fn from_tensors(num_sources: usize, audio_channels: usize, weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out, inp) = Self::dims(num_sources, audio_channels);
        if weight.shape() != [out, inp] || bias.shape() != [out] {
            return Err(Error::dim("mixer", weight.shape(), &[out, inp]));
        }
        Ok(Mixer {
            num_sources,
            audio_channels,
            weight: Parameter::new("mixer.weight", weight),
            bias: Parameter::new("mixer.bias", bias),
        })
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn audio_channels(&self) -> usize {
        self.audio_channels
    }

    /// `sources[i]` and `mixture` are `[audio_channels, len]`; returns one
    /// refined `[audio_channels, len]` var per source.
    pub fn forward(&self, tape: &mut Tape, sources: &[Var], mixture: Var) -> Result<Vec<Var>> {
        if sources.len() != self.num_sources {
            return Err(Error::contract(format!(
                "mixer expects {} sources, got {}",
                self.num_sources,
                sources.len()
            )));
        }
        let want = tape.shape(mixture).to_vec();
        if want.len() != 2 || want[0] != self.audio_channels {
            return Err(Error::dim("mixer mixture", &want, &[self.audio_channels]));
        }
        for &s in sources {
            if tape.shape(s) != want.as_slice() {
                return Err(Error::contract(format!(
                    "mixer inputs differ in shape: {:?} vs {:?}",
                    tape.shape(s),
                    want
                )));
            }
        }
        let mut parts = sources.to_vec();
        parts.push(mixture);
        let stacked = tape.concat0(&parts)?;
        let per_sample = tape.swap_last2(stacked)?;
        let (w, b) = (tape.param(&self.weight), tape.param(&self.bias));
        let mapped = tape.linear(per_sample, w, b)?;
        let out = tape.swap_last2(mapped)?;
        let c = self.audio_channels;
        (0..self.num_sources).map(|i| tape.narrow(out, 0, i * c, c)).collect()
    }

    /// Waveform-level refinement of `sources` given the `mixture`.
    pub fn apply(&self, sources: &[Waveform], mixture: &Waveform) -> Result<Vec<Waveform>> {
        for s in sources {
            s.check_aligned(mixture)?;
        }
        let mut tape = Tape::inference();
        let vars: Vec<Var> = sources.iter().map(|s| tape.constant(s.to_tensor())).collect();
        let m = tape.constant(mixture.to_tensor());
        let outs = self.forward(&mut tape, &vars, m)?;
        outs.into_iter()
            .map(|v| Waveform::from_tensor(tape.value(v), mixture.sample_rate()))
            .collect()
    }
}

impl Module for Mixer {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}
