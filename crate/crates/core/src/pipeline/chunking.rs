use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::Waveform;
use crate::error::Result;

/// `1 - |2 (n + 1/2) / len - 1|`: a triangle that never reaches zero.
pub fn triangular_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 1.0 - crate::math::abs(2.0 * (n as f64 + 0.5) / len as f64 - 1.0))
        .collect()
}

/// Chunk layout for overlapped inference.
///
/// Chunks advance by a quarter of their length (75% overlap). The grid is
/// anchored `chunk_len - hop` samples before the signal so every sample is
/// covered by the same number of chunks, which keeps the output
/// shift-consistent in the interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunk_len: usize,
    pub hop: usize,
    /// Zero samples prepended before the first chunk.
    pub front: usize,
    pub count: usize,
    pub signal_len: usize,
}

impl ChunkPlan {
    pub fn new(chunk_len: usize, signal_len: usize) -> Self {
        if signal_len <= chunk_len {
            return ChunkPlan {
                chunk_len,
                hop: chunk_len,
                front: 0,
                count: 1,
                signal_len,
            };
        }
        let hop = (chunk_len / 4).max(1);
        let front = chunk_len - hop;
        let count = (front + signal_len - 1) / hop + 1;
        ChunkPlan {
            chunk_len,
            hop,
            front,
            count,
            signal_len,
        }
    }

    pub fn is_single(&self) -> bool {
        self.count == 1
    }

    /// Runs `f` on every chunk and cross-fades the results back to the
    /// original length.
    pub fn run<F>(&self, signal: &Waveform, mut f: F) -> Result<Waveform>
    where
        F: FnMut(&Waveform) -> Result<Waveform>,
    {
        let channels = signal.channels();
        if self.is_single() {
            let out = f(&signal.segment(0, self.chunk_len))?;
            return Ok(out.segment(0, self.signal_len));
        }
        let padded_len = (self.count - 1) * self.hop + self.chunk_len;
        let mut padded = vec![0.0; channels * padded_len];
        for c in 0..channels {
            padded[c * padded_len + self.front..c * padded_len + self.front + self.signal_len]
                .copy_from_slice(signal.channel(c));
        }
        let padded = Waveform::from_parts_unchecked(channels, padded, signal.sample_rate());
        let window = triangular_window(self.chunk_len);
        let mut acc = vec![0.0; channels * padded_len];
        let mut weight = vec![0.0; padded_len];
        for j in 0..self.count {
            let start = j * self.hop;
            let out = f(&padded.segment(start, self.chunk_len))?;
            for c in 0..channels {
                let src = out.channel(c);
                let dst = &mut acc[c * padded_len + start..c * padded_len + start + self.chunk_len];
                for ((d, s), w) in dst.iter_mut().zip(src).zip(&window) {
                    *d += s * w;
                }
            }
            for (d, w) in weight[start..start + self.chunk_len].iter_mut().zip(&window) {
                *d += w;
            }
        }
        let mut data = Vec::with_capacity(channels * self.signal_len);
        for c in 0..channels {
            for i in 0..self.signal_len {
                let p = self.front + i;
                data.push(acc[c * padded_len + p] / weight[p]);
            }
        }
        Ok(Waveform::from_parts_unchecked(channels, data, signal.sample_rate()))
    }
}
