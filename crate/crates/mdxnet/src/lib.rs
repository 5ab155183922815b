//! File formats, dataset tooling, threaded drivers and the command line
//! around `mdxnet-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod parallel;
pub mod report;
pub mod wav;

pub use error::{MdxError, Result};
