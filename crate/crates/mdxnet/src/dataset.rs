//! Dataset index files and the synthetic dataset writer.
//!
//! An index is UTF-8 text with one `song_name,vocals_path,drums_path,bass_path,other_path`
//! line per song. Relative paths resolve against the index file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mdxnet_core::eval::{gen_synth_song, SynthSpec};
use mdxnet_core::pipeline::{SourceName, SourceSet};
use mdxnet_core::train::{Song, StemDataset};

use crate::error::{MdxError, Result};
use crate::wav::{read_wav, write_wav};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub song: String,
    /// Stem paths in source order.
    pub stems: [PathBuf; 4],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn parse(text: &str, base: &Path) -> std::result::Result<Self, String> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 || fields.iter().any(|f| f.is_empty()) {
                return Err(format!(
                    "line {}: expected song_name,vocals_path,drums_path,bass_path,other_path",
                    n + 1
                ));
            }
            if entries.iter().any(|e: &IndexEntry| e.song == fields[0]) {
                return Err(format!("line {}: duplicate song {:?}", n + 1, fields[0]));
            }
            let stems = std::array::from_fn(|i| base.join(fields[i + 1]));
            entries.push(IndexEntry {
                song: fields[0].to_string(),
                stems,
            });
        }
        if entries.is_empty() {
            return Err("index lists no songs".into());
        }
        Ok(DatasetIndex { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MdxError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|m| MdxError::format(path, m))
    }

    /// Paths are written as given.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            write!(s, "{}", e.song).unwrap();
            for p in &e.stems {
                write!(s, ",{}", p.display()).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Reads every stem; stems of a song must agree in channels, length and rate.
    pub fn load_songs(&self) -> Result<Vec<Song>> {
        let mut songs = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let mut stems = Vec::with_capacity(4);
            for p in &e.stems {
                stems.push(read_wav(p)?);
            }
            let stems: [_; 4] = stems.try_into().expect("four stems");
            let set = SourceSet::new(stems)
                .map_err(|err| MdxError::format(&e.stems[0], format!("song {}: {err}", e.song)))?;
            songs.push(Song {
                name: e.song.clone(),
                stems: set,
            });
        }
        Ok(songs)
    }
}

pub fn load_dataset(index: impl AsRef<Path>) -> Result<StemDataset> {
    let songs = DatasetIndex::load(index)?.load_songs()?;
    Ok(StemDataset::new(songs)?)
}

pub const INDEX_FILE: &str = "index.csv";

/// Writes `song_NNN/{vocals,drums,bass,other,mixture}.wav` and `index.csv`
/// under `out_dir`; returns the index path. After writing, the mixture file
/// is read back and checked to equal the sum of the stem files exactly.
pub fn gen_synth_dataset(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out = out_dir.as_ref();
    spec.validate()?;
    let mut index = DatasetIndex::default();
    for i in 0..spec.num_songs {
        let song = gen_synth_song(spec, i)?;
        let dir = out.join(&song.name);
        std::fs::create_dir_all(&dir).map_err(|e| MdxError::io(&dir, e))?;
        let mut rel: Vec<PathBuf> = Vec::new();
        for s in SourceName::ALL {
            let name = format!("{s}.wav");
            write_wav(dir.join(&name), song.stems.get(s))?;
            rel.push(Path::new(&song.name).join(name));
        }
        let mix_path = dir.join("mixture.wav");
        write_wav(&mix_path, &song.mixture())?;
        let stems: Vec<_> = SourceName::ALL
            .iter()
            .map(|s| read_wav(dir.join(format!("{s}.wav"))))
            .collect::<Result<_>>()?;
        let reread = SourceSet::new(stems.try_into().expect("four stems"))?;
        if read_wav(&mix_path)? != reread.mixture() {
            return Err(MdxError::format(&mix_path, "mixture is not the exact sum of the stems"));
        }
        index.entries.push(IndexEntry {
            song: song.name,
            stems: rel.try_into().expect("four stems"),
        });
    }
    let path = out.join(INDEX_FILE);
    std::fs::write(&path, index.render()).map_err(|e| MdxError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lines_resolve_relative_to_base() {
        let idx = DatasetIndex::parse("a,v.wav,d.wav,b.wav,o.wav\n", Path::new("/data")).unwrap();
        assert_eq!(idx.entries[0].stems[2], PathBuf::from("/data/b.wav"));
    }

    #[test]
    fn bad_index_lines_are_rejected() {
        assert!(DatasetIndex::parse("a,v.wav,d.wav", Path::new(".")).is_err());
        assert!(DatasetIndex::parse("", Path::new(".")).is_err());
        assert!(DatasetIndex::parse("a,1,2,3,4\na,1,2,3,4", Path::new(".")).is_err());
    }
}
