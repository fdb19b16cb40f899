//! Data-free knowledge distillation for LiDAR-aided mmWave beam tracking.
//!
//! The crate covers the whole loop on a synthetic vehicular scene:
//!
//! * [`oracle`]: ULA steering, DFT codebook, multipath channels and the
//!   exhaustive-search optimal beam.
//! * [`scenario`]: vehicle trajectories, LiDAR-like feature windows and
//!   labelled datasets with trajectory-level splits.
//! * [`autodiff`] and [`nn`]: a small reverse-mode tape, the GRU
//!   teacher/student, the noise-to-sequence generator, Adam and checkpoints.
//! * [`losses`]: generator inversion losses and student distillation losses.
//! * [`pipelines`]: teacher pretraining, generator inversion, data-free and
//!   standard distillation, and the from-scratch baseline.
//! * [`eval`], [`experiment`] and [`cli`]: Top-K evaluation, manifest-driven
//!   experiments and the `dfkd` command line.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod eval;
pub mod losses;
pub mod pipelines;
pub mod nn;
pub mod oracle;
pub mod scenario;

pub use error::{Error, Result};
