use rand::Rng;
use rand_distr::StandardNormal;

use super::config::ScenarioConfig;
use super::trajectory::{kmh_to_mps, VehicleState};

/// LiDAR-like feature frame of length `feature_dim`.
///
/// Layout: normalized range, sin(bearing), cos(bearing) rescaled to [-1, 1],
/// signed speed, then `D - 4` Gaussian bins spread evenly over the bearing
/// span [-pi/2, pi/2]. Noise is added before clamping to [-1, 1].
pub fn lidar_features(state: &VehicleState, config: &ScenarioConfig, rng: &mut impl Rng) -> Vec<f64> {
    let d = config.feature_dim;
    let bearing = state.bearing();
    let mut f = Vec::with_capacity(d);
    f.push(2.0 * (state.range_m() / config.max_range_m).min(1.0) - 1.0);
    f.push(bearing.sin());
    f.push(2.0 * bearing.cos() - 1.0);
    f.push(state.heading * state.speed_mps / kmh_to_mps(config.speed_max_kmh));
    let bins = d - 4;
    let width = std::f64::consts::PI / bins as f64;
    for k in 0..bins {
        let center = -std::f64::consts::FRAC_PI_2 + width * (k as f64 + 0.5);
        let z = (bearing - center) / width;
        f.push(2.0 * (-0.5 * z * z).exp() - 1.0);
    }
    if config.feature_noise_std > 0.0 {
        for v in &mut f {
            *v += config.feature_noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    f.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    f
}
