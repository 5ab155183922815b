//! SDR report rendering.

use std::fmt::Write as _;

use mdxnet_core::eval::SdrReport;
use mdxnet_core::pipeline::SourceName;

pub const CSV_HEADER: &str = "song,source,median_sdr_db";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per song and source; a song whose reference is silent throughout
/// has an empty value.
pub fn render_csv(r: &SdrReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for song in &r.songs {
        for src in SourceName::ALL {
            writeln!(s, "{},{},{}", song.song, src, cell(song.get(src).median_db)).unwrap();
        }
    }
    s
}

pub fn render_table(r: &SdrReport) -> String {
    let width = r.songs.iter().map(|s| s.song.len()).max().unwrap_or(4).max(6);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:8.3}")).unwrap_or_else(|| format!("{:>8}", "-"));
    let mut s = String::new();
    write!(s, "{:width$}", "song").unwrap();
    for src in SourceName::ALL {
        write!(s, " {:>8}", src.as_str()).unwrap();
    }
    s.push('\n');
    for song in &r.songs {
        write!(s, "{:width$}", song.song).unwrap();
        for src in SourceName::ALL {
            write!(s, " {}", fmt(song.get(src).median_db)).unwrap();
        }
        s.push('\n');
    }
    write!(s, "{:width$}", "median").unwrap();
    for src in SourceName::ALL {
        write!(s, " {}", fmt(r.source_median(src))).unwrap();
    }
    s.push('\n');
    let frames: usize = r.songs.iter().map(|x| x.scores[0].frames_total).sum();
    writeln!(s, "{} songs, {} frames of {} s", r.song_count(), frames, r.frame_seconds).unwrap();
    s
}

/// Composed TDF map as `rows` lines of comma-separated values.
pub fn render_matrix_csv(n: usize, data: &[f64]) -> String {
    let mut s = String::new();
    for row in data.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}
