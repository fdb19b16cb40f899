//! Independent brute-force beam search, coded without the library's oracle.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `max_m |sum_n conj(h_n) w_mn|^2` with `w_mn = exp(j 2 pi n m / M) / sqrt(N)`;
/// ties resolve to the smallest index.
pub fn brute_force_beam(h: &[Complex64], num_beams: usize) -> (usize, Vec<f64>) {
    let n_ant = h.len();
    let gains: Vec<f64> = (0..num_beams)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, hn) in h.iter().enumerate() {
                let w = Complex64::from_polar(1.0 / (n_ant as f64).sqrt(), 2.0 * PI * (n * m) as f64 / num_beams as f64);
                acc += hn.conj() * w;
            }
            acc.norm_sqr()
        })
        .collect();
    let mut best = 0;
    for m in 1..num_beams {
        if gains[m] > gains[best] {
            best = m;
        }
    }
    (best, gains)
}

/// `h = sum_l g_l [exp(j pi n sin(theta_l))]_n`.
pub fn ula_channel(n_ant: usize, paths: &[(Complex64, f64)]) -> Vec<Complex64> {
    (0..n_ant)
        .map(|n| paths.iter().map(|(g, az)| g * Complex64::from_polar(1.0, PI * n as f64 * az.sin())).sum())
        .collect()
}

/// Azimuth whose spatial frequency lands exactly on beam `m`.
pub fn on_grid_azimuth(m: usize, num_beams: usize) -> f64 {
    let mut s = 2.0 * m as f64 / num_beams as f64;
    if s > 1.0 {
        s -= 2.0;
    }
    s.asin()
}
