use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::oracle::ArrayConfig;

/// Straight road parallel to the array axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    /// Perpendicular distance from the base station to the road, metres.
    pub lateral_offset_m: f64,
    /// Start positions are drawn from [-half_span, half_span] along the road.
    pub half_span_m: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        RoadGeometry {
            lateral_offset_m: 8.0,
            half_span_m: 20.0,
        }
    }
}

/// Everything needed to regenerate a synthetic dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub array: ArrayConfig,
    pub feature_dim: usize,
    pub obs_len: usize,
    pub horizon: usize,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub slot_duration_s: f64,
    pub carrier_ghz: f64,
    pub road: RoadGeometry,
    /// Range that maps to +1 in the range feature.
    pub max_range_m: f64,
    pub clutter_paths: usize,
    /// Upper bound on clutter amplitude relative to the LOS amplitude.
    pub clutter_rel_gain: f64,
    pub feature_noise_std: f64,
    pub num_trajectories: usize,
    pub slots_per_trajectory: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            array: ArrayConfig::default(),
            feature_dim: 32,
            obs_len: 8,
            horizon: 3,
            speed_min_kmh: 3.0,
            speed_max_kmh: 18.0,
            slot_duration_s: 0.1,
            carrier_ghz: 60.0,
            road: RoadGeometry::default(),
            max_range_m: 50.0,
            clutter_paths: 2,
            clutter_rel_gain: 0.3,
            feature_noise_std: 0.01,
            num_trajectories: 200,
            slots_per_trajectory: 50,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.feature_dim < 4 {
            return bad(format!("feature_dim must be >= 4, got {}", self.feature_dim));
        }
        if self.obs_len == 0 {
            return bad("obs_len must be positive".into());
        }
        if !(self.speed_min_kmh > 0.0 && self.speed_max_kmh >= self.speed_min_kmh) {
            return bad(format!(
                "speed range must be positive and ordered, got [{}, {}]",
                self.speed_min_kmh, self.speed_max_kmh
            ));
        }
        if self.slot_duration_s <= 0.0 {
            return bad("slot duration must be > 0".into());
        }
        if self.road.lateral_offset_m <= 0.0 || self.road.half_span_m < 0.0 || self.max_range_m <= 0.0 {
            return bad("road geometry must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.clutter_rel_gain) || self.feature_noise_std < 0.0 {
            return bad("clutter gain must be in [0, 1] and noise stddev >= 0".into());
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.obs_len + self.horizon
    }

    pub fn wavelength_m(&self) -> f64 {
        299_792_458.0 / (self.carrier_ghz * 1e9)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
