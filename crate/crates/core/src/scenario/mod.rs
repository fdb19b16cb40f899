//! Synthetic vehicular scene standing in for a real LiDAR + mmWave capture.
//!
//! A vehicle drives at constant speed along a straight road next to the
//! base station. Each slot yields a LiDAR-like feature frame and a noiseless
//! optimal-beam label from exhaustive codebook search.

mod config;
mod dataset;
mod features;
mod trajectory;

pub use config::{RoadGeometry, ScenarioConfig};
pub use dataset::{
    load_dataset, make_dataset, make_dataset_range, read_dataset_header, save_dataset,
    trajectory_splits, windows_from_trajectory, BeamLabels, Dataset, DatasetHeader, LidarSequence,
    Sample, Split, SplitIndices, DATASET_MAGIC, DATASET_VERSION,
};
pub use features::lidar_features;
pub use trajectory::{
    constant_speed_states, kmh_to_mps, paths_from_state, simulate_trajectory, trajectory_rng,
    Scatterer, Trajectory, VehicleState,
};
