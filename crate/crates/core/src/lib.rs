//! Spectrogram-domain music demixing: TFC-TDF U-Nets, a Mixer refiner and
//! two-stream blending, together with the tape-based autodiff, STFT,
//! training and SDR machinery they run on.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, WAV I/O,
//! threading and the command line live in the `mdxnet` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;

mod math;

pub use error::{Error, Result};
