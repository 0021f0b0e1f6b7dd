//! End-to-end model, training loop, checkpointing, and full-image
//! reconstruction.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{
    forward_full, forward_full_with_enc, reconstruct, reconstruct_from_checkpoint, ModelSpec,
    Reconstruction,
};
pub use train::{
    lr_schedule, sample_patches, EpochStat, PatchPair, TrainConfig, Trainer, TrainingScene,
};
