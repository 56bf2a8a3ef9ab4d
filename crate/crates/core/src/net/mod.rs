//! The matting network: 4-channel patch embedding, an encoder of MAGA and
//! plain attention blocks, a three-scale CNN detail branch and a
//! progressive fusion decoder ending in a sigmoid alpha matte.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry};
pub use config::NetConfig;
pub use model::{
    decoder_fuse, decoder_plan, detail_branch, forward, patch_embed, validate_trimap, ConvParams, DecoderParams,
    DecoderStage, ForwardTrace, MattingNet, NetParams, PatchEmbedParams,
};
pub use train::{composition_loss, loss_alpha, unknown_mask, LrSchedule, Sample, TrainConfig, Trainer};
