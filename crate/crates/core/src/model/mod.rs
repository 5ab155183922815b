//! TFC-TDF U-Net separators and the Mixer refiner.

mod blocks;
mod init;
mod mixer;
mod unet;

pub use blocks::{TdfBlock, TfcBlock, TfcTdfBlock};
pub use init::INIT_GAIN;
pub use mixer::Mixer;
pub use unet::{ChannelPlan, ForwardTrace, SkipKind, SkipOverride, UNetV2, UNetV2Config};

pub use crate::tensor::Module;
