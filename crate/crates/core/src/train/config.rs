use alloc::format;

use crate::error::{Error, Result};
use crate::pipeline::SourceName;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainTarget {
    Source(SourceName),
    Mixer,
}

impl TrainTarget {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "mixer" {
            return Some(TrainTarget::Mixer);
        }
        SourceName::parse(s).map(TrainTarget::Source)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainTarget::Source(s) => s.as_str(),
            TrainTarget::Mixer => "mixer",
        }
    }
}

/// Optimiser and loop settings shared by both training phases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Squared-gradient decay.
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub steps: usize,
    /// Independent augmented chunks per step; gradients are averaged.
    pub batch_size: usize,
    pub seed: u64,
    pub target: TrainTarget,
    /// Validation period in steps; 0 disables validation.
    pub val_every: usize,
    /// Size of the fixed held-out chunk list.
    pub val_chunks: usize,
    /// Draw each stem from an independent song and offset.
    pub mix_instruments: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-3,
            rms_alpha: 0.9,
            rms_eps: 1e-8,
            steps: 500,
            batch_size: 4,
            seed: 0,
            target: TrainTarget::Source(SourceName::Bass),
            val_every: 50,
            val_chunks: 4,
            mix_instruments: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.rms_alpha) {
            return Err(Error::config(format!("rms_alpha must be in [0, 1), got {}", self.rms_alpha)));
        }
        if !(self.rms_eps > 0.0) {
            return Err(Error::config("rms_eps must be > 0"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}
