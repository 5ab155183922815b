//! Energy-ratio SDR with framewise median aggregation, evaluation drivers and
//! the synthetic stem generator used for desk-scale experiments.

mod synth;

pub use synth::{gen_synth_song, gen_synth_stems, max_cross_correlation, SynthSpec, DECORRELATION_LIMIT, SAMPLE_GRID};

use alloc::string::String;
use alloc::vec::Vec;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{Mixer, UNetV2};
use crate::pipeline::{demix, BlendWeights, SecondStream, SeparatorBundle, SourceName, SourceSet};
use crate::train::Song;

/// Stabiliser added to both energies.
pub const SDR_DELTA: f64 = 1e-10;
/// Upper bound on any reported SDR in dB.
pub const SDR_CAP_DB: f64 = 100.0;

/// `10 log10((sum ref^2 + d) / (sum (ref - est)^2 + d))` over all channels
/// jointly, capped at [`SDR_CAP_DB`].
pub fn sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::contract("sdr needs at least one sample"));
    }
    reference.check_aligned(estimate)?;
    Ok(sdr_slices(reference.samples(), estimate.samples()))
}

fn sdr_slices(r: &[f64], e: &[f64]) -> f64 {
    let num: f64 = r.iter().map(|v| v * v).sum();
    let den: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
    let db = 10.0 * math::log10((num + SDR_DELTA) / (den + SDR_DELTA));
    if db > SDR_CAP_DB {
        SDR_CAP_DB
    } else {
        db
    }
}

/// Median of `values`; the mean of the two middle values for even counts.
/// `None` for an empty input. NaNs are not expected and sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Aggregate of per-frame SDRs for one stem.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSdr {
    /// `None` when every frame of the reference is silent.
    pub median_db: Option<f64>,
    pub frames_used: usize,
    pub frames_total: usize,
}

/// Samples per frame for `frame_seconds` at `sample_rate`, at least one.
pub fn frame_len(frame_seconds: f64, sample_rate: u32) -> Result<usize> {
    if !(frame_seconds > 0.0) || !frame_seconds.is_finite() {
        return Err(Error::contract(alloc::format!("frame_seconds must be > 0, got {frame_seconds}")));
    }
    Ok((math::round(frame_seconds * sample_rate as f64) as usize).max(1))
}

/// SDR on non-overlapping frames of `frame_seconds`, skipping frames whose
/// reference is exactly zero, aggregated by the median. A trailing partial
/// frame is scored like any other.
pub fn framewise_sdr(reference: &Waveform, estimate: &Waveform, frame_seconds: f64) -> Result<FrameSdr> {
    reference.check_aligned(estimate)?;
    let len = frame_len(frame_seconds, reference.sample_rate())?;
    let n = reference.len();
    let mut scores = Vec::new();
    let mut total = 0;
    let mut start = 0;
    let (mut r, mut e) = (Vec::new(), Vec::new());
    while start < n {
        let end = (start + len).min(n);
        total += 1;
        r.clear();
        e.clear();
        for c in 0..reference.channels() {
            r.extend_from_slice(&reference.channel(c)[start..end]);
            e.extend_from_slice(&estimate.channel(c)[start..end]);
        }
        if r.iter().any(|&v| v != 0.0) {
            scores.push(sdr_slices(&r, &e));
        }
        start = end;
    }
    Ok(FrameSdr {
        median_db: median(&scores),
        frames_used: scores.len(),
        frames_total: total,
    })
}

/// Framewise scores of one song, one entry per source in source order.
#[derive(Clone, Debug, PartialEq)]
pub struct SongScores {
    pub song: String,
    pub scores: [FrameSdr; 4],
}

impl SongScores {
    pub fn get(&self, source: SourceName) -> &FrameSdr {
        &self.scores[source.index()]
    }
}

/// Scores `estimates` against the stems of `song`.
pub fn score_song(song: &Song, estimates: &SourceSet, frame_seconds: f64) -> Result<SongScores> {
    let mut scores = Vec::with_capacity(4);
    for s in SourceName::ALL {
        scores.push(framewise_sdr(song.stems.get(s), estimates.get(s), frame_seconds)?);
    }
    let scores: [FrameSdr; 4] = scores.try_into().expect("four sources");
    Ok(SongScores {
        song: song.name.clone(),
        scores,
    })
}

/// Per-song, per-source median framewise SDR plus medians across songs.
#[derive(Clone, Debug, PartialEq)]
pub struct SdrReport {
    pub frame_seconds: f64,
    /// Sorted by song name.
    pub songs: Vec<SongScores>,
}

impl SdrReport {
    pub fn new(frame_seconds: f64, mut songs: Vec<SongScores>) -> Self {
        songs.sort_by(|a, b| a.song.cmp(&b.song));
        SdrReport { frame_seconds, songs }
    }

    /// Median over songs that have a finite score for `source`.
    pub fn source_median(&self, source: SourceName) -> Option<f64> {
        let v: Vec<f64> = self.songs.iter().filter_map(|s| s.get(source).median_db).collect();
        median(&v)
    }

    pub fn song_count(&self) -> usize {
        self.songs.len()
    }
}

/// Evaluates `separate` on every song's mixture.
pub fn evaluate_with<F>(songs: &[Song], frame_seconds: f64, mut separate: F) -> Result<SdrReport>
where
    F: FnMut(&Waveform) -> Result<SourceSet>,
{
    frame_len(frame_seconds, 1)?;
    let mut rows = Vec::with_capacity(songs.len());
    for song in songs {
        let est = separate(&song.mixture())?;
        rows.push(score_song(song, &est, frame_seconds)?);
    }
    Ok(SdrReport::new(frame_seconds, rows))
}

/// Full two-stream pipeline evaluation.
pub fn evaluate(
    songs: &[Song],
    bundle: &SeparatorBundle,
    mixer: Option<&Mixer>,
    second: &dyn SecondStream,
    weights: &BlendWeights,
    frame_seconds: f64,
) -> Result<SdrReport> {
    evaluate_with(songs, frame_seconds, |m| demix(m, bundle, mixer, second, weights))
}

/// Composed `F x F` map of the TDF block called `name`; the error lists the
/// available block names.
pub fn tdf_composed(net: &UNetV2, name: &str) -> Result<(usize, Vec<f64>)> {
    let blocks = net.tdf_blocks();
    match blocks.iter().find(|b| b.name() == name) {
        Some(b) => Ok((b.bins(), b.composed())),
        None => {
            let names: Vec<&str> = blocks.iter().map(|b| b.name()).collect();
            Err(Error::contract(alloc::format!(
                "no TDF block named {name:?}; available: {}",
                names.join(", ")
            )))
        }
    }
}
