use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::pipeline::{SourceName, SourceSet};

#[derive(Clone, Debug, PartialEq)]
pub struct Song {
    pub name: String,
    pub stems: SourceSet,
}

impl Song {
    pub fn mixture(&self) -> Waveform {
        self.stems.mixture()
    }
}

/// In-memory songs; each mixture is the sample-wise sum of its four stems.
#[derive(Clone, Debug, PartialEq)]
pub struct StemDataset {
    songs: Vec<Song>,
}

impl StemDataset {
    pub fn new(songs: Vec<Song>) -> Result<Self> {
        let Some(first) = songs.first() else {
            return Err(Error::contract("dataset has no songs"));
        };
        let (rate, ch) = (first.stems.get(SourceName::Vocals).sample_rate(), first.stems.get(SourceName::Vocals).channels());
        for s in &songs {
            let v = s.stems.get(SourceName::Vocals);
            if v.sample_rate() != rate || v.channels() != ch {
                return Err(Error::contract(format!(
                    "song {} has {} ch @ {} Hz, expected {ch} ch @ {rate} Hz",
                    s.name,
                    v.channels(),
                    v.sample_rate()
                )));
            }
            if v.is_empty() {
                return Err(Error::contract(format!("song {} is empty", s.name)));
            }
        }
        Ok(StemDataset { songs })
    }

    pub fn songs(&self) -> &[Song] {
        &self.songs
    }

    pub fn len(&self) -> usize {
        self.songs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.songs.is_empty()
    }

    pub fn min_len(&self) -> usize {
        self.songs.iter().map(|s| s.stems.len()).min().unwrap_or(0)
    }

    pub fn sample_rate(&self) -> u32 {
        self.songs[0].stems.get(SourceName::Vocals).sample_rate()
    }

    pub fn audio_channels(&self) -> usize {
        self.songs[0].stems.get(SourceName::Vocals).channels()
    }

    fn check_chunk(&self, chunk_len: usize) -> Result<()> {
        if chunk_len == 0 || chunk_len > self.min_len() {
            return Err(Error::contract(format!(
                "chunk of {chunk_len} samples does not fit the shortest song ({} samples)",
                self.min_len()
            )));
        }
        Ok(())
    }

    fn draw_position<R: Rng>(&self, chunk_len: usize, rng: &mut R) -> (usize, usize) {
        let song = rng.random_range(0..self.songs.len());
        let offset = rng.random_range(0..=self.songs[song].stems.len() - chunk_len);
        (song, offset)
    }

    /// All four stems cut at one uniformly drawn song and offset.
    pub fn chunk_set<R: Rng>(&self, chunk_len: usize, rng: &mut R) -> Result<SourceSet> {
        self.check_chunk(chunk_len)?;
        let (song, offset) = self.draw_position(chunk_len, rng);
        let src = self.songs[song].stems.stems();
        let stems = core::array::from_fn(|i| src[i].segment(offset, chunk_len));
        SourceSet::new(stems)
    }

    /// Each stem cut from its own song and offset, drawn in source order.
    /// A single-song dataset falls back to [`StemDataset::chunk_set`].
    pub fn mixed_chunk_set<R: Rng>(&self, chunk_len: usize, rng: &mut R) -> Result<SourceSet> {
        if self.songs.len() < 2 {
            return self.chunk_set(chunk_len, rng);
        }
        self.check_chunk(chunk_len)?;
        let stems = SourceName::ALL.map(|s| {
            let (song, offset) = self.draw_position(chunk_len, rng);
            self.songs[song].stems.get(s).segment(offset, chunk_len)
        });
        SourceSet::new(stems)
    }
}

/// Random chunk of a random song: `(mixture, target stem)`.
pub fn sample_chunk<R: Rng>(
    data: &StemDataset,
    source: SourceName,
    chunk_len: usize,
    rng: &mut R,
) -> Result<(Waveform, Waveform)> {
    let set = data.chunk_set(chunk_len, rng)?;
    Ok((set.mixture(), set.get(source).clone()))
}

/// Instrument-mixing augmentation: `(sum of independently drawn stems, drawn target stem)`.
pub fn mix_instruments<R: Rng>(
    data: &StemDataset,
    source: SourceName,
    chunk_len: usize,
    rng: &mut R,
) -> Result<(Waveform, Waveform)> {
    let set = data.mixed_chunk_set(chunk_len, rng)?;
    Ok((set.mixture(), set.get(source).clone()))
}
