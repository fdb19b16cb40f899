//! Build the DFT codebook, realize channels along one simulated trajectory
//! and compare the optimal codebook beam against the matched-filter bound.
//!
//! ```text
//! cargo run --release --example beam_oracle -- [trajectory_index]
//! ```

use dfkd_beam::oracle::{
    beam_distance, beam_gains, dft_codebook, grid_beam, matched_filter_snr, optimal_beam, received_snr,
    ChannelRealization,
};
use dfkd_beam::scenario::{paths_from_state, simulate_trajectory, ScenarioConfig};

fn main() -> dfkd_beam::Result<()> {
    let index = std::env::args().nth(1).map_or(0, |a| a.parse().expect("index must be an integer"));
    let config = ScenarioConfig::default();
    let array = config.array;
    let codebook = dft_codebook(array.num_antennas, array.num_beams)?;
    println!("codebook: N={} antennas, M={} beams", codebook.num_antennas(), codebook.num_beams());

    let traj = simulate_trajectory(&config, index);
    println!(
        "trajectory {index}: {:.1} km/h, {} slots, {} clutter scatterers",
        traj.states[0].speed_mps * 3.6,
        traj.states.len(),
        traj.scatterers.len()
    );
    println!("slot  range_m  bearing_deg  beam  los_grid  gain_dB  loss_vs_mf_dB");
    let (tx_power, noise_var) = (1.0, 1e-9);
    for state in traj.states.iter().step_by(10) {
        let paths = paths_from_state(state, &traj.scatterers, &config);
        let ch = ChannelRealization::new(paths, array.num_antennas, noise_var, tx_power)?;
        let beam = optimal_beam(&ch.h, &codebook)?;
        let gains = beam_gains(&ch.h, &codebook)?;
        let snr = received_snr(&ch.h, codebook.beam(beam), tx_power, noise_var)?;
        let bound = matched_filter_snr(&ch.h, tx_power, noise_var)?;
        let los = grid_beam(state.bearing(), array.num_beams);
        println!(
            "{:>4}  {:>7.1}  {:>11.1}  {:>4}  {:>8}  {:>7.1}  {:>13.2}{}",
            state.slot,
            state.range_m(),
            state.bearing().to_degrees(),
            beam,
            los,
            10.0 * gains[beam].log10(),
            10.0 * (bound / snr).log10(),
            if beam_distance(beam, los, array.num_beams) > 1 { "  (clutter wins)" } else { "" }
        );
    }
    Ok(())
}
