//! Dataset audits: labels recomputed from scratch, split hygiene, temporal
//! coherence and a nearest-neighbour learnability probe.

use std::collections::BTreeMap;

use dfkd_beam::oracle::beam_distance;
use dfkd_beam::scenario::{paths_from_state, simulate_trajectory, Dataset, Split};
use num_complex::Complex64;

use super::channel::{brute_force_beam, ula_channel};

pub struct Audit {
    pub labels_checked: usize,
    pub label_mismatches: Vec<String>,
    pub split_leaks: Vec<String>,
    pub coherent_fraction: f64,
}

pub fn audit_dataset(ds: &Dataset) -> Audit {
    let c = &ds.config;
    let m = c.array.num_beams;
    let mut beams_by_traj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for t in 0..c.num_trajectories {
        let traj = simulate_trajectory(c, t);
        let beams: Vec<usize> = traj
            .states
            .iter()
            .map(|s| {
                let paths = paths_from_state(s, &traj.scatterers, c);
                let pairs: Vec<(Complex64, f64)> = paths.paths.iter().map(|p| (p.gain, p.azimuth)).collect();
                brute_force_beam(&ula_channel(c.array.num_antennas, &pairs), m).0
            })
            .collect();
        beams_by_traj.insert(t, beams);
    }
    for (i, s) in ds.samples.iter().enumerate() {
        let beams = &beams_by_traj[&s.trajectory];
        for (v, &label) in s.labels.0.iter().enumerate() {
            checked += 1;
            if beams[s.slot + v] != label {
                mismatches.push(format!("sample {i} offset {v}: stored {label}, recomputed {}", beams[s.slot + v]));
            }
        }
    }
    let mut split_of: BTreeMap<usize, Split> = BTreeMap::new();
    let mut leaks = Vec::new();
    for s in &ds.samples {
        let split = ds.split_of(s);
        if let Some(prev) = split_of.insert(s.trajectory, split) {
            if prev != split {
                leaks.push(format!("trajectory {} in {prev} and {split}", s.trajectory));
            }
        }
    }
    let limit = m.div_ceil(8);
    let (mut ok, mut total) = (0, 0);
    for beams in beams_by_traj.values() {
        for w in beams.windows(2) {
            total += 1;
            if beam_distance(w[0], w[1], m) <= limit {
                ok += 1;
            }
        }
    }
    Audit {
        labels_checked: checked,
        label_mismatches: mismatches,
        split_leaks: leaks,
        coherent_fraction: ok as f64 / total as f64,
    }
}

/// 1-NN on the last observed frame: test-split queries against train-split
/// references, Top-1 on the current beam.
pub fn nearest_neighbour_top1(ds: &Dataset, queries: usize) -> f64 {
    let c = &ds.config;
    let d = c.feature_dim;
    let last = |i: usize| &ds.samples[i].sequence.frames()[(c.obs_len - 1) * d..c.obs_len * d];
    let train = ds.split_indices(Split::Train);
    let test: Vec<usize> = ds.split_indices(Split::Test).into_iter().take(queries).collect();
    let hits = test
        .iter()
        .filter(|&&q| {
            let nearest = train
                .iter()
                .min_by(|&&a, &&b| {
                    let da: f64 = last(a).iter().zip(last(q)).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = last(b).iter().zip(last(q)).map(|(x, y)| (x - y).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            ds.samples[*nearest].labels.0[0] == ds.samples[q].labels.0[0]
        })
        .count();
    hits as f64 / test.len() as f64
}
