//! Threaded drivers. Work is split by source or by song and merged in a
//! fixed order, so results match the sequential functions exactly.

use std::thread;

use mdxnet_core::dsp::Waveform;
use mdxnet_core::eval::{score_song, SdrReport};
use mdxnet_core::model::Mixer;
use mdxnet_core::pipeline::{blend, finish, BlendWeights, SecondStream, SeparatorBundle, SourceName, SourceSet};
use mdxnet_core::train::Song;
use mdxnet_core::Result;

/// The four separators on one thread each, then the Mixer.
pub fn separate_all_parallel(mixture: &Waveform, bundle: &SeparatorBundle, mixer: Option<&Mixer>) -> Result<SourceSet> {
    let outs: Vec<Result<Waveform>> = thread::scope(|s| {
        let handles: Vec<_> = SourceName::ALL
            .iter()
            .map(|&src| s.spawn(move || bundle.get(src).separate(mixture)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("separator thread panicked")).collect()
    });
    let stems: Vec<Waveform> = outs.into_iter().collect::<Result<_>>()?;
    finish(stems.try_into().expect("four stems"), mixture, mixer)
}

pub fn demix_parallel(
    mixture: &Waveform,
    bundle: &SeparatorBundle,
    mixer: Option<&Mixer>,
    second: &(dyn SecondStream + Sync),
    weights: &BlendWeights,
) -> Result<SourceSet> {
    let first = separate_all_parallel(mixture, bundle, mixer)?;
    blend(&first, &second.separate(mixture)?, weights)
}

/// Songs spread over `workers` threads; the report is sorted by song name.
pub fn evaluate_parallel(
    songs: &[Song],
    bundle: &SeparatorBundle,
    mixer: Option<&Mixer>,
    second: &(dyn SecondStream + Sync),
    weights: &BlendWeights,
    frame_seconds: f64,
    workers: usize,
) -> Result<SdrReport> {
    let workers = workers.clamp(1, songs.len().max(1));
    let results: Vec<Vec<(usize, Result<_>)>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..songs.len())
                        .step_by(workers)
                        .map(|i| {
                            let song = &songs[i];
                            let r = mdxnet_core::pipeline::demix(&song.mixture(), bundle, mixer, second, weights)
                                .and_then(|est| score_song(song, &est, frame_seconds));
                            (i, r)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut flat: Vec<(usize, Result<_>)> = results.into_iter().flatten().collect();
    flat.sort_by_key(|(i, _)| *i);
    let rows = flat.into_iter().map(|(_, r)| r).collect::<Result<Vec<_>>>()?;
    Ok(SdrReport::new(frame_seconds, rows))
}

/// Available hardware threads, at least one.
pub fn default_workers() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
