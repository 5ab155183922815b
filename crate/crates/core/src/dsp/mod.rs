//! Waveforms, STFT analysis/synthesis and frequency cutting.

mod fft;
mod stft;

pub use fft::Fft;
pub use stft::{freq_cut, freq_cut_op, freq_pad, freq_pad_op, istft, istft_op, stft, stft_op, StftPlan};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Multi-channel audio, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    channels: usize,
    data: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// `data` holds `channels` consecutive runs of equal length.
    pub fn new(channels: usize, data: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if !(1..=2).contains(&channels) {
            return Err(Error::contract(alloc::format!(
                "waveforms have 1 or 2 channels, got {channels}"
            )));
        }
        if !data.len().is_multiple_of(channels) {
            return Err(Error::contract("sample count is not a multiple of the channel count"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            channels,
            data,
            sample_rate,
        })
    }

    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::contract("channels differ in length"));
        }
        Self::new(channels.len(), channels.concat(), sample_rate)
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Waveform {
            channels,
            data: vec![0.0; channels * len],
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Duplicates a mono signal into two channels; stereo input is returned as is.
    pub fn to_stereo(&self) -> Waveform {
        if self.channels == 2 {
            return self.clone();
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&self.data);
        Waveform {
            channels: 2,
            data,
            sample_rate: self.sample_rate,
        }
    }

    /// `len` samples starting at `start`; positions past the end read as zero.
    pub fn segment(&self, start: usize, len: usize) -> Waveform {
        let n = self.len();
        let mut data = vec![0.0; self.channels * len];
        for c in 0..self.channels {
            let src = self.channel(c);
            let end = (start + len).min(n);
            if start < end {
                data[c * len..c * len + end - start].copy_from_slice(&src[start..end]);
            }
        }
        Waveform {
            channels: self.channels,
            data,
            sample_rate: self.sample_rate,
        }
    }

    /// Channel-major `[channels, len]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.channels, self.len()], self.data.clone()).expect("consistent layout")
    }

    pub fn from_tensor(t: &Tensor, sample_rate: u32) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::dim("waveform from tensor", t.shape(), &[2]));
        }
        Self::new(t.shape()[0], t.data().to_vec(), sample_rate)
    }

    pub(crate) fn from_parts_unchecked(channels: usize, data: Vec<f64>, sample_rate: u32) -> Self {
        Waveform {
            channels,
            data,
            sample_rate,
        }
    }

    pub fn check_aligned(&self, other: &Waveform) -> Result<()> {
        if self.channels != other.channels || self.len() != other.len() {
            return Err(Error::contract(alloc::format!(
                "waveforms not aligned: {}x{} vs {}x{}",
                self.channels,
                self.len(),
                other.channels,
                other.len()
            )));
        }
        if self.sample_rate != other.sample_rate {
            return Err(Error::contract(alloc::format!(
                "sample rates differ: {} vs {}",
                self.sample_rate,
                other.sample_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * crate::math::cos(2.0 * core::f64::consts::PI * i as f64 / n as f64))
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hann" => Some(Window::Hann),
            "rectangular" => Some(Window::Rectangular),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    /// Low-frequency bins kept by [`freq_cut`].
    pub dim_f: usize,
    pub window: Window,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, dim_f: usize) -> Result<Self> {
        let cfg = StftConfig {
            n_fft,
            hop,
            dim_f,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || !self.n_fft.is_multiple_of(2) {
            return Err(Error::config(alloc::format!("n_fft must be even and positive, got {}", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::config(alloc::format!(
                "hop must be in 1..=n_fft, got {} with n_fft {}",
                self.hop,
                self.n_fft
            )));
        }
        if self.dim_f == 0 || self.dim_f > self.full_bins() {
            return Err(Error::config(alloc::format!(
                "dim_f must be in 1..={}, got {}",
                self.full_bins(),
                self.dim_f
            )));
        }
        Ok(())
    }

    pub fn full_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a signal of `len` samples under centre padding.
    pub fn frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// Samples per network chunk so that [`stft`] yields exactly `dim_t` frames.
    pub fn chunk_len(&self, dim_t: usize) -> usize {
        self.hop * (dim_t.max(1) - 1)
    }
}

/// Complex STFT as stacked (real, imag) channel pairs: `[2 * channels, bins, frames]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    data: Tensor,
    cfg: StftConfig,
}

impl Spectrogram {
    pub fn new(data: Tensor, cfg: StftConfig) -> Result<Self> {
        let s = data.shape();
        if s.len() != 3 || !s[0].is_multiple_of(2) || s[1] > cfg.full_bins() {
            return Err(Error::dim("spectrogram", s, &[cfg.full_bins()]));
        }
        Ok(Spectrogram { data, cfg })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn full_bins(&self) -> usize {
        self.cfg.full_bins()
    }

    pub fn audio_channels(&self) -> usize {
        self.data.shape()[0] / 2
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[2]
    }

    /// Energy `re^2 + im^2` at one (audio channel, bin, frame).
    pub fn power(&self, channel: usize, bin: usize, frame: usize) -> f64 {
        let (b, t) = (self.bins(), self.frames());
        let re = self.data.data()[((2 * channel) * b + bin) * t + frame];
        let im = self.data.data()[((2 * channel + 1) * b + bin) * t + frame];
        re * re + im * im
    }
}
