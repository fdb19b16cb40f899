use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::oracle::{Path, PathSet};

/// Vehicle state in one slot. The base station sits at the origin with its
/// array along x and broadside along +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub slot: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
    /// +1 when driving toward +x, -1 otherwise.
    pub heading: f64,
}

impl VehicleState {
    pub fn range_m(&self) -> f64 {
        self.x_m.hypot(self.y_m)
    }

    /// Angle from broadside, positive toward +x.
    pub fn bearing(&self) -> f64 {
        self.x_m.atan2(self.y_m)
    }
}

/// Static scatterer contributing one clutter path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub azimuth: f64,
    /// Amplitude relative to the LOS path.
    pub rel_gain: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: usize,
    pub states: Vec<VehicleState>,
    pub scatterers: Vec<Scatterer>,
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// RNG stream for trajectory `index`, independent of generation order.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Constant-speed straight-line drive along the road.
pub fn simulate_trajectory(config: &ScenarioConfig, index: usize) -> Trajectory {
    let mut rng = trajectory_rng(config.seed, index);
    simulate_with_rng(config, index, &mut rng)
}

pub(crate) fn simulate_with_rng(config: &ScenarioConfig, index: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let speed_kmh = rng.random_range(config.speed_min_kmh..=config.speed_max_kmh);
    let speed_mps = kmh_to_mps(speed_kmh);
    let span = config.road.half_span_m;
    let x0 = if span > 0.0 { rng.random_range(-span..=span) } else { 0.0 };
    let heading = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let scatterers = (0..config.clutter_paths)
        .map(|_| Scatterer {
            azimuth: rng.random_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2),
            rel_gain: rng.random_range(0.0..=config.clutter_rel_gain),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    let states = constant_speed_states(
        x0,
        config.road.lateral_offset_m,
        speed_mps,
        heading,
        config.slot_duration_s,
        config.slots_per_trajectory,
    );
    Trajectory {
        index,
        states,
        scatterers,
    }
}

pub fn constant_speed_states(
    x0: f64,
    y: f64,
    speed_mps: f64,
    heading: f64,
    slot_s: f64,
    slots: usize,
) -> Vec<VehicleState> {
    (0..slots)
        .map(|slot| VehicleState {
            slot,
            x_m: x0 + heading * speed_mps * slot_s * slot as f64,
            y_m: y,
            speed_mps,
            heading,
        })
        .collect()
}

/// LOS path with inverse-distance amplitude plus the static clutter paths.
pub fn paths_from_state(state: &VehicleState, scatterers: &[Scatterer], config: &ScenarioConfig) -> PathSet {
    let range = state.range_m();
    let los_amp = 1.0 / range;
    let phase = -std::f64::consts::TAU * range / config.wavelength_m();
    let mut paths = vec![Path {
        gain: Complex64::from_polar(los_amp, phase),
        azimuth: state.bearing(),
        elevation: 0.0,
    }];
    paths.extend(scatterers.iter().map(|s| Path {
        gain: Complex64::from_polar(s.rel_gain * los_amp, s.phase + phase),
        azimuth: s.azimuth,
        elevation: 0.0,
    }));
    PathSet { paths }
}
