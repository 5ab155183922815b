use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::math;
use crate::pipeline::SourceSet;
use crate::train::Song;

/// Every pair of generated stems must stay below this normalised
/// cross-correlation.
pub const DECORRELATION_LIMIT: f64 = 0.2;

const TAU: f64 = core::f64::consts::TAU;

/// Samples are rounded to multiples of this step. Any sum of four such
/// samples below 16 in magnitude is then exact in `f32`, so a float WAV
/// mixture equals the sum of its float WAV stems bit for bit.
pub const SAMPLE_GRID: f64 = 1.0 / (1u64 << 20) as f64;

/// Settings for the synthetic four-stem songs.
///
/// Recipes: vocals are a vibrato sine melody in phrases, drums are
/// exponentially decaying noise bursts on the beat, bass is a low sine line
/// with a weak second harmonic, and other is a three-note chord pad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_songs: usize,
    pub duration_seconds: f64,
    pub sample_rate: u32,
    pub channels: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_songs: 2,
            duration_seconds: 30.0,
            sample_rate: 44_100,
            channels: 2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_songs == 0 {
            return Err(Error::config("num_songs must be at least 1"));
        }
        if !(self.duration_seconds > 0.0) || !self.duration_seconds.is_finite() {
            return Err(Error::config("duration must be > 0 seconds"));
        }
        if self.sample_rate < 1000 {
            return Err(Error::config(format!("sample rate {} is too low", self.sample_rate)));
        }
        if !(1..=2).contains(&self.channels) {
            return Err(Error::config("channels must be 1 or 2"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (math::round(self.duration_seconds * self.sample_rate as f64) as usize).max(1)
    }
}

const BASS_NOTES: [f64; 8] = [41.2, 46.25, 49.0, 55.0, 61.74, 65.41, 73.42, 82.41];
const VOCAL_NOTES: [f64; 8] = [293.66, 329.63, 369.99, 392.0, 440.0, 493.88, 554.37, 587.33];
const PAD_CHORDS: [[f64; 3]; 4] = [
    [261.63, 329.63, 392.0],
    [220.0, 277.18, 329.63],
    [246.94, 311.13, 369.99],
    [196.0, 246.94, 293.66],
];

fn pan(channels: usize, p: f64) -> Vec<f64> {
    if channels == 1 {
        vec![1.0]
    } else {
        vec![1.0 - p, 1.0 + p]
    }
}

fn to_wave(mono: &[f64], gains: &[f64], rate: u32) -> Waveform {
    let data: Vec<f64> = gains
        .iter()
        .flat_map(|g| mono.iter().map(move |v| math::round(v * g / SAMPLE_GRID) * SAMPLE_GRID))
        .collect();
    Waveform::from_parts_unchecked(gains.len(), data, rate)
}

fn vocals(n: usize, rate: f64, beat: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let note_len = beat / 2.0 * rng.random_range(1.0..2.0);
    let vib_rate = rng.random_range(4.5..6.0);
    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    let mut note = VOCAL_NOTES[rng.random_range(0..VOCAL_NOTES.len())];
    let mut next_change = 0.0;
    // Phrases of four bars with a one bar rest.
    let phrase = 4.0 * beat * 4.0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / rate;
        if t >= next_change {
            note = VOCAL_NOTES[rng.random_range(0..VOCAL_NOTES.len())];
            next_change += note_len;
        }
        let f = note * (1.0 + 0.015 * math::sin(TAU * vib_rate * t));
        phase += TAU * f / rate;
        if phase > TAU {
            phase -= TAU;
        }
        let pos = t % (phrase + 4.0 * beat);
        let env = if pos < phrase {
            let a = (pos / 0.05).min(1.0);
            let r = ((phrase - pos) / 0.05).min(1.0);
            a * r
        } else {
            0.0
        };
        *o = 0.3 * env * (math::sin(phase) + 0.2 * math::sin(2.0 * phase));
    }
    out
}

fn drums(n: usize, rate: f64, beat: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let step = (beat / 2.0 * rate) as usize;
    let decay = 0.04 * rate;
    let mut k = 0;
    let mut start = 0;
    while start < n {
        let accent = if k % 2 == 0 { 1.0 } else { 0.5 };
        let len = ((decay * 6.0) as usize).min(n - start);
        for j in 0..len {
            let env = math::exp(-(j as f64) / decay);
            out[start + j] += 0.3 * accent * env * rng.random_range(-1.0..1.0);
        }
        k += 1;
        start += step.max(1);
    }
    out
}

fn bass(n: usize, rate: f64, beat: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    let mut note = BASS_NOTES[0];
    let mut next_change = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / rate;
        if t >= next_change {
            note = BASS_NOTES[rng.random_range(0..BASS_NOTES.len())];
            next_change += beat;
        }
        phase += TAU * note / rate;
        if phase > TAU {
            phase -= TAU;
        }
        let since = t - (next_change - beat);
        let env = (since / 0.01).min(1.0) * (0.6 + 0.4 * math::exp(-since / 0.3));
        *o = 0.4 * env * (math::sin(phase) + 0.3 * math::sin(2.0 * phase));
    }
    out
}

fn pad(n: usize, rate: f64, beat: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let bar = 4.0 * beat;
    let mut phases = [0.0; 3];
    let mut chord = PAD_CHORDS[0];
    let mut next_change = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / rate;
        if t >= next_change {
            chord = PAD_CHORDS[rng.random_range(0..PAD_CHORDS.len())];
            next_change += bar;
        }
        let mut s = 0.0;
        for (p, f) in phases.iter_mut().zip(chord) {
            *p += TAU * f / rate;
            if *p > TAU {
                *p -= TAU;
            }
            s += math::sin(*p);
        }
        *o = 0.2 / 3.0 * s;
    }
    out
}

/// Largest `|<a, b>| / (|a| |b|)` over all pairs of stems.
pub fn max_cross_correlation(stems: &SourceSet) -> f64 {
    let s = stems.stems();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let a = s[i].samples();
            let b = s[j].samples();
            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let bb: f64 = b.iter().map(|x| x * x).sum();
            let den = math::sqrt(aa * bb);
            if den > 0.0 {
                worst = worst.max(math::abs(ab) / den);
            }
        }
    }
    worst
}

/// Stems of song `index`; each song draws from its own seeded stream.
pub fn gen_synth_stems(spec: &SynthSpec, index: usize) -> Result<SourceSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let n = spec.len();
    let rate = spec.sample_rate as f64;
    let beat = 60.0 / rng.random_range(96.0..132.0);
    let gens: [fn(usize, f64, f64, &mut ChaCha8Rng) -> Vec<f64>; 4] = [vocals, drums, bass, pad];
    let pans = [0.1, -0.2, 0.0, 0.3];
    let mut stems = Vec::with_capacity(4);
    for (g, p) in gens.iter().zip(pans) {
        let mono = g(n, rate, beat, &mut rng);
        stems.push(to_wave(&mono, &pan(spec.channels, p), spec.sample_rate));
    }
    let set = SourceSet::new(stems.try_into().expect("four stems"))?;
    let rho = max_cross_correlation(&set);
    if !(rho < DECORRELATION_LIMIT) {
        return Err(Error::contract(format!(
            "synthetic stems of song {index} correlate at {rho:.3}, limit {DECORRELATION_LIMIT}"
        )));
    }
    Ok(set)
}

/// Named song `song_{index:03}`.
pub fn gen_synth_song(spec: &SynthSpec, index: usize) -> Result<Song> {
    Ok(Song {
        name: format!("song_{index:03}"),
        stems: gen_synth_stems(spec, index)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::SourceName;

    fn short() -> SynthSpec {
        SynthSpec {
            num_songs: 2,
            duration_seconds: 3.0,
            sample_rate: 8000,
            channels: 2,
            seed: 11,
        }
    }

    #[test]
    fn stems_have_requested_shape() {
        let s = gen_synth_stems(&short(), 0).unwrap();
        for (_, w) in s.iter() {
            assert_eq!((w.channels(), w.len(), w.sample_rate()), (2, 24_000, 8000));
        }
    }

    #[test]
    fn seeded_generation_is_reproducible_and_songs_differ() {
        let a = gen_synth_stems(&short(), 0).unwrap();
        assert_eq!(a, gen_synth_stems(&short(), 0).unwrap());
        assert_ne!(a, gen_synth_stems(&short(), 1).unwrap());
    }

    #[test]
    fn samples_sit_on_the_grid() {
        let s = gen_synth_stems(&short(), 0).unwrap();
        for (_, w) in s.iter() {
            assert!(w.samples().iter().all(|v| (v / SAMPLE_GRID).fract() == 0.0 && v.abs() < 1.0));
        }
    }

    #[test]
    fn every_stem_is_audible() {
        let s = gen_synth_stems(&short(), 1).unwrap();
        for (name, w) in s.iter() {
            let e: f64 = w.samples().iter().map(|v| v * v).sum();
            assert!(e > 1.0, "{name} energy {e}");
        }
    }

    #[test]
    fn correlation_of_a_stem_with_itself_is_one() {
        let w = gen_synth_stems(&short(), 0).unwrap().get(SourceName::Bass).clone();
        let set = SourceSet::new([w.clone(), w.clone(), w.clone(), w]).unwrap();
        assert!((max_cross_correlation(&set) - 1.0).abs() < 1e-12);
    }
}
