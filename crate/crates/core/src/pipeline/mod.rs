//! End-to-end separation: per-source chunked inference, Mixer refinement
//! and blending with a second separation stream.

mod chunking;

pub use chunking::{triangular_window, ChunkPlan};

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::dsp::{freq_cut_op, freq_pad_op, istft_op, stft_op, StftConfig, StftPlan, Waveform};
use crate::error::{Error, Result};
use crate::model::{Mixer, UNetV2};
use crate::tensor::{Tape, Var};

/// The four stems, in the fixed order used everywhere (array indices,
/// Mixer channels, reports).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceName {
    Vocals,
    Drums,
    Bass,
    Other,
}

impl SourceName {
    pub const ALL: [SourceName; 4] = [SourceName::Vocals, SourceName::Drums, SourceName::Bass, SourceName::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceName::Vocals => "vocals",
            SourceName::Drums => "drums",
            SourceName::Bass => "bass",
            SourceName::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    /// Per-source analysis window length of the full-size configuration.
    pub fn default_n_fft(self) -> usize {
        match self {
            SourceName::Vocals => 6144,
            SourceName::Drums => 4096,
            SourceName::Bass => 16384,
            SourceName::Other => 8192,
        }
    }
}

impl fmt::Display for SourceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full-size STFT settings: shared hop 1024 and 2048 kept bins, per-source n_fft.
pub fn default_stft_config(source: SourceName) -> StftConfig {
    StftConfig::new(source.default_n_fft(), 1024, 2048).expect("valid defaults")
}

/// One separation network together with its STFT front end.
#[derive(Clone)]
pub struct Separator {
    net: UNetV2,
    stft: StftConfig,
    plan: Arc<StftPlan>,
}

impl fmt::Debug for Separator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Separator")
            .field("net", self.net.config())
            .field("stft", &self.stft)
            .finish()
    }
}

impl Separator {
    pub fn new(net: UNetV2, stft: StftConfig) -> Result<Self> {
        let cfg = net.config();
        if stft.dim_f != cfg.dim_f {
            return Err(Error::config(format!(
                "stft dim_f {} differs from network dim_f {}",
                stft.dim_f, cfg.dim_f
            )));
        }
        if !cfg.in_channels.is_multiple_of(2) {
            return Err(Error::config("network input planes must come in (real, imag) pairs"));
        }
        let plan = Arc::new(StftPlan::new(stft)?);
        Ok(Separator { net, stft, plan })
    }

    pub fn net(&self) -> &UNetV2 {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut UNetV2 {
        &mut self.net
    }

    pub fn into_net(self) -> UNetV2 {
        self.net
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft
    }

    pub fn plan(&self) -> &Arc<StftPlan> {
        &self.plan
    }

    pub fn audio_channels(&self) -> usize {
        self.net.config().in_channels / 2
    }

    /// Native chunk length in samples: exactly `dim_t` STFT frames.
    pub fn chunk_len(&self) -> usize {
        self.stft.chunk_len(self.net.config().dim_t)
    }

    /// stft -> cut -> network -> pad -> istft on a `[channels, chunk_len]` var.
    pub fn forward_chunk(&self, tape: &mut Tape, chunk: Var) -> Result<Var> {
        let len = tape.shape(chunk)[1];
        let spec = stft_op(tape, chunk, &self.plan)?;
        let cut = freq_cut_op(tape, spec, self.stft.dim_f)?;
        let est = self.net.forward(tape, cut)?;
        let full = freq_pad_op(tape, est, self.stft.full_bins())?;
        istft_op(tape, full, &self.plan, len)
    }

    /// Inference on one chunk of exactly [`Separator::chunk_len`] samples.
    pub fn separate_chunk(&self, chunk: &Waveform) -> Result<Waveform> {
        if chunk.len() != self.chunk_len() {
            return Err(Error::contract(format!(
                "chunk has {} samples, network expects {}",
                chunk.len(),
                self.chunk_len()
            )));
        }
        let mut tape = Tape::inference();
        let x = tape.constant(chunk.to_tensor());
        let y = self.forward_chunk(&mut tape, x)?;
        Waveform::from_tensor(tape.value(y), chunk.sample_rate())
    }

    /// Whole-signal inference with overlapping, cross-faded chunks. Inputs no
    /// longer than one chunk run as a single zero-padded chunk.
    pub fn separate(&self, mixture: &Waveform) -> Result<Waveform> {
        if mixture.channels() != self.audio_channels() {
            return Err(Error::contract(format!(
                "separator expects {} channels, mixture has {}",
                self.audio_channels(),
                mixture.channels()
            )));
        }
        if mixture.is_empty() {
            return Err(Error::contract("cannot separate an empty mixture"));
        }
        let plan = ChunkPlan::new(self.chunk_len(), mixture.len());
        plan.run(mixture, |chunk| self.separate_chunk(chunk))
    }
}

/// One separator per source.
#[derive(Clone, Debug)]
pub struct SeparatorBundle {
    separators: [Separator; 4],
}

impl SeparatorBundle {
    /// `separators` in [`SourceName::ALL`] order.
    pub fn new(separators: [Separator; 4]) -> Result<Self> {
        let first = separators[0].stft_config();
        for s in &separators[1..] {
            let c = s.stft_config();
            if c.hop != first.hop || c.dim_f != first.dim_f {
                return Err(Error::config(format!(
                    "separators must share hop and dim_f: ({}, {}) vs ({}, {})",
                    first.hop, first.dim_f, c.hop, c.dim_f
                )));
            }
            if s.audio_channels() != separators[0].audio_channels() {
                return Err(Error::config("separators disagree on the audio channel count"));
            }
        }
        Ok(SeparatorBundle { separators })
    }

    pub fn get(&self, source: SourceName) -> &Separator {
        &self.separators[source.index()]
    }

    pub fn separators(&self) -> &[Separator; 4] {
        &self.separators
    }

    pub fn audio_channels(&self) -> usize {
        self.separators[0].audio_channels()
    }
}

/// Four aligned stems in [`SourceName::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSet {
    stems: [Waveform; 4],
}

impl SourceSet {
    pub fn new(stems: [Waveform; 4]) -> Result<Self> {
        for s in &stems[1..] {
            s.check_aligned(&stems[0])?;
        }
        Ok(SourceSet { stems })
    }

    pub fn get(&self, source: SourceName) -> &Waveform {
        &self.stems[source.index()]
    }

    pub fn stems(&self) -> &[Waveform; 4] {
        &self.stems
    }

    pub fn into_stems(self) -> [Waveform; 4] {
        self.stems
    }

    pub fn len(&self) -> usize {
        self.stems[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems[0].is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SourceName, &Waveform)> {
        SourceName::ALL.into_iter().zip(self.stems.iter())
    }

    /// Sample-wise `(vocals + drums) + (bass + other)`.
    pub fn mixture(&self) -> Waveform {
        let [v, d, b, o] = &self.stems;
        let data = v
            .samples()
            .iter()
            .zip(d.samples())
            .zip(b.samples().iter().zip(o.samples()))
            .map(|((v, d), (b, o))| (v + d) + (b + o))
            .collect();
        Waveform::from_parts_unchecked(v.channels(), data, v.sample_rate())
    }
}

/// Blend weight of the first stream for each source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendWeights([f64; 4]);

impl Default for BlendWeights {
    fn default() -> Self {
        BlendWeights([1.0; 4])
    }
}

impl BlendWeights {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!(
                "blend weight for {} must be in [0, 1], got {v}",
                SourceName::ALL[i]
            )));
        }
        Ok(BlendWeights(w))
    }

    pub fn uniform(w: f64) -> Result<Self> {
        Self::new([w; 4])
    }

    pub fn get(&self, source: SourceName) -> f64 {
        self.0[source.index()]
    }
}

/// Sample-wise `w * a + (1 - w) * b` per source. Weights of exactly 1 or 0
/// select a stream unchanged, and where both streams agree the shared value
/// is passed through.
pub fn blend(a: &SourceSet, b: &SourceSet, w: &BlendWeights) -> Result<SourceSet> {
    let mut out: Vec<Waveform> = Vec::with_capacity(4);
    for (source, sa) in a.iter() {
        let sb = b.get(source);
        sa.check_aligned(sb)?;
        let wv = w.get(source);
        if wv == 1.0 || wv == 0.0 {
            out.push(if wv == 1.0 { sa.clone() } else { sb.clone() });
            continue;
        }
        let data = sa
            .samples()
            .iter()
            .zip(sb.samples())
            .map(|(&x, &y)| if x == y { x } else { wv * x + (1.0 - wv) * y })
            .collect();
        out.push(Waveform::from_parts_unchecked(sa.channels(), data, sa.sample_rate()));
    }
    let stems: [Waveform; 4] = out.try_into().expect("four sources");
    SourceSet::new(stems)
}

/// A separation stream independent of the spectrogram networks.
pub trait SecondStream {
    fn separate(&self, mixture: &Waveform) -> Result<SourceSet>;
}

/// Non-informative stand-in for a time-domain separator: every stem is
/// `mixture / 4`, so the stems sum back to the mixture exactly.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassthroughStub;

impl SecondStream for PassthroughStub {
    fn separate(&self, mixture: &Waveform) -> Result<SourceSet> {
        let data: Vec<f64> = mixture.samples().iter().map(|v| v * 0.25).collect();
        let w = Waveform::from_parts_unchecked(mixture.channels(), data, mixture.sample_rate());
        SourceSet::new([w.clone(), w.clone(), w.clone(), w])
    }
}

/// Single separator on the whole signal.
pub fn separate_one(mixture: &Waveform, source: SourceName, bundle: &SeparatorBundle) -> Result<Waveform> {
    bundle.get(source).separate(mixture)
}

/// Applies a trained Mixer to a set of separated stems.
pub fn refine(sources: &SourceSet, mixture: &Waveform, mixer: &Mixer) -> Result<SourceSet> {
    let refined = mixer.apply(sources.stems(), mixture)?;
    let stems: [Waveform; 4] = refined
        .try_into()
        .map_err(|_| Error::contract("mixer must produce four sources"))?;
    SourceSet::new(stems)
}

/// All four separators in source order, then the Mixer when given.
pub fn separate_all(mixture: &Waveform, bundle: &SeparatorBundle, mixer: Option<&Mixer>) -> Result<SourceSet> {
    let stems = [
        separate_one(mixture, SourceName::Vocals, bundle)?,
        separate_one(mixture, SourceName::Drums, bundle)?,
        separate_one(mixture, SourceName::Bass, bundle)?,
        separate_one(mixture, SourceName::Other, bundle)?,
    ];
    finish(stems, mixture, mixer)
}

/// Assembles separator outputs and applies the Mixer; shared by sequential
/// and threaded drivers so both produce identical results.
pub fn finish(stems: [Waveform; 4], mixture: &Waveform, mixer: Option<&Mixer>) -> Result<SourceSet> {
    let set = SourceSet::new(stems)?;
    match mixer {
        Some(m) => refine(&set, mixture, m),
        None => Ok(set),
    }
}

/// The full two-stream flow: separators, optional Mixer, then blending
/// with `second`.
pub fn demix(
    mixture: &Waveform,
    bundle: &SeparatorBundle,
    mixer: Option<&Mixer>,
    second: &dyn SecondStream,
    weights: &BlendWeights,
) -> Result<SourceSet> {
    let first = separate_all(mixture, bundle, mixer)?;
    let other = second.separate(mixture)?;
    blend(&first, &other, weights)
}
