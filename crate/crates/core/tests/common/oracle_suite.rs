use dfkd_beam::oracle::{
    beam_gains, dft_codebook, matched_filter_snr, optimal_beam, received_snr, steering_vector, Path, PathSet,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::channel::{brute_force_beam, on_grid_azimuth, ula_channel};

/// Single on-grid paths, matched-filter bound and argmax invariance over
/// `draws` random channels (N = 16, M = 64).
pub fn oracle_suite(draws: usize) -> Vec<String> {
    let (n, m) = (16, 64);
    let cb = dft_codebook(n, m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut bad = Vec::new();
    for i in 0..draws {
        let beam = rng.random_range(0..m);
        let gain = Complex64::from_polar(rng.random_range(0.01..10.0), rng.random_range(-3.14..3.14));
        let az = on_grid_azimuth(beam, m);
        let h = dfkd_beam::oracle::channel_realize(&PathSet { paths: vec![Path { gain, azimuth: az, elevation: 0.0 }] }, n);
        let got = optimal_beam(&h, &cb).unwrap();
        if got != beam {
            bad.push(format!("draw {i}: on-grid beam {beam} but optimal_beam gave {got}"));
        }
        let own = ula_channel(n, &[(gain, az)]);
        let max_dev = h.iter().zip(&own).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if max_dev > 1e-9 * gain.norm() {
            bad.push(format!("draw {i}: channel differs from reference by {max_dev:e}"));
        }

        let k = rng.random_range(1..5);
        let paths: Vec<(Complex64, f64)> = (0..k)
            .map(|_| (Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-3.14..3.14)), rng.random_range(-1.5..1.5)))
            .collect();
        let h = ula_channel(n, &paths);
        let (p, var) = (rng.random_range(0.1..10.0), rng.random_range(0.01..1.0));
        let mf = matched_filter_snr(&h, p, var).unwrap();
        let best = cb.beams().map(|w| received_snr(&h, w, p, var).unwrap()).fold(0.0, f64::max);
        if best > mf * (1.0 + 1e-12) {
            bad.push(format!("draw {i}: codebook SNR {best} beats matched filter {mf}"));
        }
        let bound = p * h.iter().map(|x| x.norm_sqr()).sum::<f64>() / var;
        if (mf - bound).abs() > 1e-9 * bound {
            bad.push(format!("draw {i}: matched filter {mf} vs |h|^2 P / var = {bound}"));
        }

        let base = optimal_beam(&h, &cb).unwrap();
        let (reference, gains) = brute_force_beam(&h, m);
        let lib_gains = beam_gains(&h, &cb).unwrap();
        let gap = gains.iter().zip(&lib_gains).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if base != reference || gap > 1e-9 {
            bad.push(format!("draw {i}: optimal beam {base} vs brute force {reference} (gain gap {gap:e})"));
        }
        let c = Complex64::from_polar(rng.random_range(0.001..1000.0), rng.random_range(-3.14..3.14));
        let scaled: Vec<Complex64> = h.iter().map(|x| c * x).collect();
        let moved = optimal_beam(&scaled, &cb).unwrap();
        if moved != base {
            bad.push(format!("draw {i}: scaling by {c} moved the beam {base} -> {moved}"));
        }
    }
    let a = steering_vector(n, 0.3);
    if a.iter().any(|x| (x.norm() - 1.0).abs() > 1e-12) {
        bad.push("steering vector not unit modulus".into());
    }
    bad
}
