//! Generate the windowed LiDAR/beam dataset, save it and show its header and
//! one sample.
//!
//! ```text
//! cargo run --release --example generate_dataset -- [out.dfkd] [num_trajectories]
//! ```

use dfkd_beam::scenario::{load_dataset, make_dataset, read_dataset_header, save_dataset, ScenarioConfig, Split};

fn main() -> dfkd_beam::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "dataset.dfkd".into());
    let mut config = ScenarioConfig::default();
    if let Some(n) = args.next() {
        config.num_trajectories = n.parse().expect("num_trajectories must be an integer");
    }

    let ds = make_dataset(&config)?;
    save_dataset(&ds, &out)?;
    let header = read_dataset_header(&out)?;
    println!("wrote {out}");
    println!(
        "{} windows, L={} observed frames, D={} features, V={} horizon heads, M={} beams",
        header.num_samples, config.obs_len, header.feature_dim, header.num_heads, header.num_beams
    );
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("  {split:?}: {} windows", ds.split_indices(split).len());
    }
    println!("config hash {}", header.config_hash);

    let again = load_dataset(&out)?;
    assert_eq!(again.len(), ds.len());
    let s = &ds.samples[0];
    println!(
        "sample 0: trajectory {} slot {} labels {:?}; first frame {:.3?}",
        s.trajectory,
        s.slot,
        s.labels.0,
        &s.sequence.frame(0)[..6.min(header.feature_dim)]
    );
    Ok(())
}
