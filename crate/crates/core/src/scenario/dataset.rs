//! Windowed, labelled datasets and their on-disk container.
//!
//! File layout (little-endian):
//!
//! ```text
//! 0       8   magic b"DFKDDATA"
//! 8       4   format version (u32, currently 1)
//! 12      8   header length N (u64)
//! 20      N   UTF-8 JSON header (see DatasetHeader)
//! 20+N    ..  f64 frames, num_samples × (L+V) × D
//! ..      ..  i32 labels, num_samples × (V+1)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::features::lidar_features;
use super::trajectory::{paths_from_state, simulate_with_rng, trajectory_rng, Trajectory};
use crate::error::{Error, Result};
use crate::nn::checkpoint::read_f64s;
use crate::oracle::{channel_realize, dft_codebook, optimal_beam, Codebook};

pub const DATASET_MAGIC: &[u8; 8] = b"DFKDDATA";
pub const DATASET_VERSION: u32 = 1;

/// L observed frames followed by V all-zero frames, D features each.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarSequence {
    frames: Vec<f64>,
    obs_len: usize,
    horizon: usize,
    feature_dim: usize,
}

impl LidarSequence {
    /// Pads `observed` (L×D, row-major) with V zero frames.
    pub fn from_observed(observed: &[f64], obs_len: usize, horizon: usize, feature_dim: usize) -> Result<Self> {
        if observed.len() != obs_len * feature_dim {
            return Err(Error::shape("LidarSequence", &[obs_len, feature_dim], &[observed.len()]));
        }
        let mut frames = observed.to_vec();
        frames.resize((obs_len + horizon) * feature_dim, 0.0);
        let s = LidarSequence {
            frames,
            obs_len,
            horizon,
            feature_dim,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.frames.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("LiDAR feature {v} outside [-1, 1]")));
        }
        if self.frames[self.obs_len * self.feature_dim..].iter().any(|&v| v != 0.0) {
            return Err(Error::Contract("padding frames must be exactly zero".into()));
        }
        Ok(())
    }

    /// All (L+V)×D values, row-major.
    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.feature_dim..(t + 1) * self.feature_dim]
    }

    pub fn seq_len(&self) -> usize {
        self.obs_len + self.horizon
    }
}

/// Optimal beam indices for offsets v = 0..=V.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamLabels(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sequence: LidarSequence,
    pub labels: BeamLabels,
    pub trajectory: usize,
    /// Slot index of the current (last observed) frame.
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Parameter(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// 70/15/15 split over trajectory indices, from a seeded shuffle.
pub fn trajectory_splits(num_trajectories: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..num_trajectories).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5917);
    order.shuffle(&mut rng);
    let n_train = (num_trajectories as f64 * 0.70).round() as usize;
    let n_val = (num_trajectories as f64 * 0.15).round() as usize;
    let mut splits = vec![Split::Test; num_trajectories];
    for (rank, &t) in order.iter().enumerate() {
        splits[t] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub num_samples: usize,
    pub seq_len: usize,
    pub feature_dim: usize,
    pub num_heads: usize,
    pub num_beams: usize,
    pub skipped_trajectories: usize,
    pub trajectory_split: Vec<Split>,
    pub splits: SplitIndices,
    pub sample_trajectory: Vec<usize>,
    pub sample_slot: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub samples: Vec<Sample>,
    /// Split of every trajectory index in `0..num_trajectories`.
    pub trajectory_split: Vec<Split>,
    /// Trajectories too short to yield a single window.
    pub skipped_trajectories: usize,
}

/// Windows of one trajectory: `L` observed frames, labels at offsets 0..=V.
pub fn windows_from_trajectory(
    trajectory: &Trajectory,
    config: &ScenarioConfig,
    codebook: &Codebook,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample>> {
    let (l, v, d) = (config.obs_len, config.horizon, config.feature_dim);
    let n = trajectory.states.len();
    if n < l + v {
        return Ok(Vec::new());
    }
    let frames: Vec<Vec<f64>> = trajectory
        .states
        .iter()
        .map(|s| lidar_features(s, config, rng))
        .collect();
    let labels: Vec<usize> = trajectory
        .states
        .iter()
        .map(|s| {
            let paths = paths_from_state(s, &trajectory.scatterers, config);
            optimal_beam(&channel_realize(&paths, config.array.num_antennas), codebook)
        })
        .collect::<Result<_>>()?;
    (l - 1..n - v)
        .map(|t| {
            let observed: Vec<f64> = frames[t + 1 - l..=t].concat();
            Ok(Sample {
                sequence: LidarSequence::from_observed(&observed, l, v, d)?,
                labels: BeamLabels(labels[t..=t + v].to_vec()),
                trajectory: trajectory.index,
                slot: t,
            })
        })
        .collect()
}

/// Generates the full dataset. Each trajectory uses its own RNG stream, so
/// the result does not depend on thread scheduling.
pub fn make_dataset(config: &ScenarioConfig) -> Result<Dataset> {
    make_dataset_range(config, 0..config.num_trajectories)
}

/// Generates only the trajectories in `range`; shards can be merged later.
pub fn make_dataset_range(config: &ScenarioConfig, range: std::ops::Range<usize>) -> Result<Dataset> {
    config.validate()?;
    let codebook = dft_codebook(config.array.num_antennas, config.array.num_beams)?;
    let per_traj: Vec<Vec<Sample>> = range
        .clone()
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(config.seed, i);
            let traj = simulate_with_rng(config, i, &mut rng);
            windows_from_trajectory(&traj, config, &codebook, &mut rng)
        })
        .collect::<Result<_>>()?;
    let skipped = per_traj.iter().filter(|w| w.is_empty()).count();
    if skipped > 0 {
        log::warn!(
            "skipped {skipped} trajectories shorter than {} slots",
            config.seq_len()
        );
    }
    Ok(Dataset {
        config: config.clone(),
        config_hash: config.hash(),
        samples: per_traj.into_iter().flatten().collect(),
        trajectory_split: trajectory_splits(config.num_trajectories, config.seed),
        skipped_trajectories: skipped,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_heads(&self) -> usize {
        self.config.horizon + 1
    }

    pub fn split_of(&self, sample: &Sample) -> Split {
        self.trajectory_split[sample.trajectory]
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| self.split_of(s) == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Flat B×(L+V)×D inputs and B×(V+1) labels for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.config.seq_len() * self.config.feature_dim);
        let mut y = Vec::with_capacity(indices.len() * self.num_heads());
        for &i in indices {
            x.extend_from_slice(self.samples[i].sequence.frames());
            y.extend_from_slice(&self.samples[i].labels.0);
        }
        (x, y)
    }

    /// Appends a shard generated from the same configuration.
    pub fn merge(&mut self, other: Dataset) -> Result<()> {
        if self.config_hash != other.config_hash {
            return Err(Error::ConfigMismatch(format!(
                "cannot merge datasets with config hashes {} and {}",
                self.config_hash, other.config_hash
            )));
        }
        let mine: std::collections::HashSet<usize> = self.samples.iter().map(|s| s.trajectory).collect();
        if other.samples.iter().any(|s| mine.contains(&s.trajectory)) {
            return Err(Error::Contract("merged shards share trajectories".into()));
        }
        self.skipped_trajectories += other.skipped_trajectories;
        self.samples.extend(other.samples);
        self.samples.sort_by_key(|s| (s.trajectory, s.slot));
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        let by_split = |s| self.split_indices(s);
        DatasetHeader {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            num_samples: self.samples.len(),
            seq_len: self.config.seq_len(),
            feature_dim: self.config.feature_dim,
            num_heads: self.num_heads(),
            num_beams: self.config.array.num_beams,
            skipped_trajectories: self.skipped_trajectories,
            trajectory_split: self.trajectory_split.clone(),
            splits: SplitIndices {
                train: by_split(Split::Train),
                val: by_split(Split::Val),
                test: by_split(Split::Test),
            },
            sample_trajectory: self.samples.iter().map(|s| s.trajectory).collect(),
            sample_slot: self.samples.iter().map(|s| s.slot).collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let json = serde_json::to_vec(&self.header())?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.samples.len() * self.config.seq_len() * self.config.feature_dim * 8);
        for s in &self.samples {
            for v in s.sequence.frames() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for s in &self.samples {
            for &l in &s.labels.0 {
                buf.extend_from_slice(&(l as i32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let h = read_dataset_header_from(r)?;
        let (l, v, d) = (h.config.obs_len, h.config.horizon, h.config.feature_dim);
        if h.seq_len != l + v || h.feature_dim != d || h.num_heads != v + 1 {
            return Err(Error::Format("header dimensions disagree with config".into()));
        }
        if h.sample_trajectory.len() != h.num_samples || h.sample_slot.len() != h.num_samples {
            return Err(Error::Format("per-sample index arrays have the wrong length".into()));
        }
        if h.trajectory_split.len() != h.config.num_trajectories
            || h.sample_trajectory.iter().any(|&t| t >= h.config.num_trajectories)
        {
            return Err(Error::Format("trajectory indices out of range".into()));
        }
        let per = (l + v) * d;
        let frames = read_f64s(r, h.num_samples * per)
            .map_err(|_| Error::Format("truncated frame payload".into()))?;
        let mut label_bytes = vec![0u8; h.num_samples * (v + 1) * 4];
        r.read_exact(&mut label_bytes)
            .map_err(|_| Error::Format("truncated label payload".into()))?;
        let labels: Vec<usize> = label_bytes
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
            .map(|x| {
                if x < 0 || x as usize >= h.num_beams {
                    Err(Error::Format(format!("label {x} out of range")))
                } else {
                    Ok(x as usize)
                }
            })
            .collect::<Result<_>>()?;
        let mut samples = Vec::with_capacity(h.num_samples);
        for i in 0..h.num_samples {
            let seq = &frames[i * per..(i + 1) * per];
            let sequence = LidarSequence::from_observed(&seq[..l * d], l, v, d)
                .map_err(|e| Error::Format(format!("sample {i}: {e}")))?;
            if sequence.frames() != seq {
                return Err(Error::Format(format!("sample {i}: padding frames are not zero")));
            }
            samples.push(Sample {
                sequence,
                labels: BeamLabels(labels[i * (v + 1)..(i + 1) * (v + 1)].to_vec()),
                trajectory: h.sample_trajectory[i],
                slot: h.sample_slot[i],
            });
        }
        Ok(Dataset {
            config: h.config,
            config_hash: h.config_hash,
            samples,
            trajectory_split: h.trajectory_split,
            skipped_trajectories: h.skipped_trajectories,
        })
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    ds.write_to(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| not_found(path, e))?;
    Dataset::read_from(&mut bytes.as_slice())
}

/// Reads counts and split indices without touching the payload.
pub fn read_dataset_header(path: impl AsRef<Path>) -> Result<DatasetHeader> {
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| not_found(path, e))?;
    read_dataset_header_from(&mut f)
}

fn not_found(path: &Path, e: std::io::Error) -> Error {
    match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    }
}

fn read_dataset_header_from(r: &mut impl Read) -> Result<DatasetHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for dataset magic".into()))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic bytes)".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| Error::Format("truncated version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("truncated header length".into()))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("truncated header".into()))?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad dataset header: {e}")))
}
