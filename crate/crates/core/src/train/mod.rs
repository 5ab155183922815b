//! Training: augmentation, time-domain l1 loss, RMSProp and the two-phase
//! (separators, then Mixer) procedure.

mod config;
mod data;
mod loss;
mod rmsprop;
mod trainer;

pub use config::{TrainConfig, TrainTarget};
pub use data::{mix_instruments, sample_chunk, Song, StemDataset};
pub use loss::{l1_distance, l1_time_loss};
pub use rmsprop::{rmsprop_update, RmsProp};
pub use trainer::{train_mixer, train_separator, MixerTrainer, SeparatorTrainer, TrainLog};
