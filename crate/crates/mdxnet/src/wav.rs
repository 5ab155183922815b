//! WAV reading (integer PCM and 32-bit float) and 32-bit float writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use mdxnet_core::dsp::Waveform;

use crate::error::{MdxError, Result};

fn wav_err(path: &Path, e: hound::Error) -> MdxError {
    match e {
        hound::Error::IoError(source) => MdxError::io(path, source),
        other => MdxError::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

/// Reads a mono or stereo file of 16-bit PCM (scaled by 1/32768) or 32-bit
/// float samples.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(MdxError::format(path, format!("{channels} channels; only mono and stereo are supported")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (format, bits) => {
            return Err(MdxError::format(
                path,
                format!("unsupported sample format {format:?} with bits_per_sample = {bits}"),
            ))
        }
    };
    let frames = interleaved.len() / channels;
    let mut data = vec![0.0; frames * channels];
    for (i, v) in interleaved.iter().enumerate() {
        data[(i % channels) * frames + i / channels] = *v;
    }
    Waveform::new(channels, data, spec.sample_rate).map_err(|e| MdxError::format(path, e.to_string()))
}

/// Writes 32-bit float samples.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: w.channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for i in 0..w.len() {
        for c in 0..w.channels() {
            writer.write_sample(w.channel(c)[i] as f32).map_err(|e| wav_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

/// Rounds every sample to the nearest `f32`, i.e. what a float WAV stores.
pub fn quantize_f32(w: &Waveform) -> Waveform {
    let data = w.samples().iter().map(|&v| v as f32 as f64).collect();
    Waveform::new(w.channels(), data, w.sample_rate()).expect("finite samples stay finite")
}
