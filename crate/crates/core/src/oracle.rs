//! Physical-layer ground truth: ULA channels, DFT codebook, beam gains.
//!
//! The array is a half-wavelength uniform linear array, so the response to a
//! path depends on its azimuth only. Elevation is stored with each path but
//! does not enter the steering vector.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    pub num_beams: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            num_antennas: 16,
            num_beams: 64,
        }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_beams < self.num_antennas {
            return Err(Error::Parameter(format!(
                "array needs N >= 1 and M >= N, got N={} M={}",
                self.num_antennas, self.num_beams
            )));
        }
        Ok(())
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    /// Radians from broadside, in [-pi/2, pi/2].
    pub azimuth: f64,
    /// Carried for completeness; the ULA response ignores it.
    pub elevation: f64,
}

/// Paths of one channel snapshot; the first is the dominant (LOS) path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
    pub paths: PathSet,
    pub noise_var: f64,
    pub tx_power: f64,
}

/// Constant-modulus beamforming vectors, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    columns: Vec<Vec<Complex64>>,
}

impl Codebook {
    pub fn num_antennas(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn num_beams(&self) -> usize {
        self.columns.len()
    }

    pub fn beam(&self, m: usize) -> &[Complex64] {
        &self.columns[m]
    }

    pub fn beams(&self) -> impl Iterator<Item = &[Complex64]> {
        self.columns.iter().map(Vec::as_slice)
    }
}

/// `a_n = exp(j*pi*n*sin(theta))` for n = 0..N-1.
pub fn steering_vector(num_antennas: usize, azimuth: f64) -> Vec<Complex64> {
    let phase = std::f64::consts::PI * azimuth.sin();
    (0..num_antennas)
        .map(|n| Complex64::from_polar(1.0, phase * n as f64))
        .collect()
}

/// Oversampled DFT codebook: `w_m = exp(j*2*pi*n*m/M) / sqrt(N)`.
pub fn dft_codebook(num_antennas: usize, num_beams: usize) -> Result<Codebook> {
    ArrayConfig {
        num_antennas,
        num_beams,
    }
    .validate()?;
    let scale = 1.0 / (num_antennas as f64).sqrt();
    let columns = (0..num_beams)
        .map(|m| {
            (0..num_antennas)
                .map(|n| {
                    let angle = 2.0 * std::f64::consts::PI * (n * m) as f64 / num_beams as f64;
                    Complex64::from_polar(scale, angle)
                })
                .collect()
        })
        .collect();
    Ok(Codebook { columns })
}

/// `h = sum_l alpha_l * a(theta_l)`.
pub fn channel_realize(paths: &PathSet, num_antennas: usize) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); num_antennas];
    for p in &paths.paths {
        for (hn, an) in h.iter_mut().zip(steering_vector(num_antennas, p.azimuth)) {
            *hn += p.gain * an;
        }
    }
    h
}

impl ChannelRealization {
    pub fn new(paths: PathSet, num_antennas: usize, noise_var: f64, tx_power: f64) -> Result<Self> {
        if paths.paths.is_empty() {
            return Err(Error::Parameter("channel needs at least one path".into()));
        }
        if noise_var <= 0.0 {
            return Err(Error::Parameter(format!("noise variance must be > 0, got {noise_var}")));
        }
        Ok(ChannelRealization {
            h: channel_realize(&paths, num_antennas),
            paths,
            noise_var,
            tx_power,
        })
    }
}

/// `h^H w`.
pub fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// Per-beam gains `|h^H w_m|^2`.
pub fn beam_gains(h: &[Complex64], codebook: &Codebook) -> Result<Vec<f64>> {
    if h.len() != codebook.num_antennas() {
        return Err(Error::shape(
            "beam_gains",
            &[h.len()],
            &[codebook.num_antennas(), codebook.num_beams()],
        ));
    }
    Ok(codebook.beams().map(|w| inner(h, w).norm_sqr()).collect())
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Exhaustive-search beam maximizing `|h^H w_m|^2`.
pub fn optimal_beam(h: &[Complex64], codebook: &Codebook) -> Result<usize> {
    let gains = beam_gains(h, codebook)?;
    argmax(&gains).ok_or_else(|| Error::Parameter("empty codebook".into()))
}

/// `P * |h^H w|^2 / sigma^2`.
pub fn received_snr(h: &[Complex64], w: &[Complex64], tx_power: f64, noise_var: f64) -> Result<f64> {
    if noise_var <= 0.0 || tx_power <= 0.0 {
        return Err(Error::Parameter(format!(
            "need P > 0 and noise variance > 0, got P={tx_power}, var={noise_var}"
        )));
    }
    if h.len() != w.len() {
        return Err(Error::shape("received_snr", &[h.len()], &[w.len()]));
    }
    Ok(tx_power * inner(h, w).norm_sqr() / noise_var)
}

/// SNR of the matched-filter beam `h / |h|`, the upper bound over all unit beams.
pub fn matched_filter_snr(h: &[Complex64], tx_power: f64, noise_var: f64) -> Result<f64> {
    let norm_sq: f64 = h.iter().map(Complex64::norm_sqr).sum();
    if norm_sq == 0.0 {
        return Ok(0.0);
    }
    let w: Vec<Complex64> = h.iter().map(|v| v / norm_sq.sqrt()).collect();
    received_snr(h, &w, tx_power, noise_var)
}

/// Beam index whose spatial frequency is nearest to `sin(azimuth)`
/// on the circular grid `sin(theta) = 2m/M (mod 2)`.
pub fn grid_beam(azimuth: f64, num_beams: usize) -> usize {
    let m = num_beams as f64 * azimuth.sin() / 2.0;
    (m.round() as i64).rem_euclid(num_beams as i64) as usize
}

/// Circular distance between two beam indices of an M-beam DFT codebook.
pub fn beam_distance(a: usize, b: usize, num_beams: usize) -> usize {
    let d = a.abs_diff(b) % num_beams;
    d.min(num_beams - d)
}
