//! Teacher/student sequence models, the generator, Adam, and checkpoints.

mod adam;
pub mod checkpoint;
mod config;
mod generator;
mod params;
mod seq_model;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_checkpoint, load_teacher, read_checkpoint_header, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
    CheckpointHeader, GeneratorCheckpoint, ModelKind, Provenance, StudentCheckpoint,
    TeacherCheckpoint,
};
pub use config::{GeneratorConfig, SeqModelConfig};
pub use generator::{Generator, GeneratorOutput, GeneratorParams};
pub use params::ParamSet;
pub use seq_model::{SeqModel, SeqModelParams, SeqOutput};
