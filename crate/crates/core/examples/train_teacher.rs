//! Generate the default scene, train the GRU teacher and report Top-1/Top-5
//! per horizon offset on the test split.
//!
//! ```text
//! cargo run --release --example train_teacher -- [epochs] [out.ckpt]
//! ```

use dfkd_beam::eval::evaluate;
use dfkd_beam::nn::{Checkpoint, SeqModelConfig};
use dfkd_beam::pipelines::{train_teacher, TrainConfig};
use dfkd_beam::scenario::{make_dataset, ScenarioConfig, Split};

fn main() -> dfkd_beam::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(100, |a| a.parse().expect("epochs must be an integer"));
    let out = args.next();

    let scene = ScenarioConfig::default();
    let ds = make_dataset(&scene)?;
    println!("{} windows from {} trajectories", ds.len(), scene.num_trajectories);

    let config = SeqModelConfig::teacher(scene.feature_dim);
    let (teacher, log) = train_teacher(&ds, config, &TrainConfig::teacher().with_epochs(epochs))?;
    println!(
        "loss {:.4} -> {:.4} in {:.1}s",
        log.first_loss().unwrap(),
        log.last_loss().unwrap(),
        log.wall_clock_s
    );

    let report = evaluate(&teacher.model, "teacher", &ds, Split::Test)?;
    for o in &report.offsets {
        println!("offset {}: top-1 {:.3}  top-5 {:.3}", o.offset, o.top1, o.top5);
    }
    if let Some(path) = out {
        Checkpoint::Teacher(teacher).save(&path)?;
        println!("saved {path}");
    }
    Ok(())
}
