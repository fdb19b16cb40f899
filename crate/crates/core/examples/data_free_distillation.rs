//! Data-free distillation from a saved teacher: invert it into a generator,
//! distill a 32-unit student on generated sequences only, then score both
//! models on the real test split.
//!
//! ```text
//! cargo run --release --example train_teacher -- 100 teacher.ckpt
//! cargo run --release --example data_free_distillation -- teacher.ckpt [gen_epochs] [student_epochs]
//! ```

use dfkd_beam::eval::evaluate;
use dfkd_beam::losses::KdConfig;
use dfkd_beam::nn::{load_teacher, GeneratorConfig, SeqModelConfig};
use dfkd_beam::pipelines::{train_generator, train_student_df, TrainConfig};
use dfkd_beam::scenario::{make_dataset, ScenarioConfig, Split};

fn main() -> dfkd_beam::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map_or("teacher.ckpt", String::as_str);
    let epochs = |i: usize, d: usize| args.get(i).map_or(d, |a| a.parse().expect("epochs must be an integer"));
    let teacher = load_teacher(path)?;

    let gconfig = GeneratorConfig::for_model(&teacher.model.config);
    let (gen, glog) = train_generator(&teacher, gconfig, &TrainConfig::generator().with_epochs(epochs(1, 500)))?;
    let meta = glog.term("metadata");
    println!(
        "generator: metadata loss {:.5} -> {:.5} ({:.1}s)",
        meta[0],
        meta[meta.len() - 1],
        glog.wall_clock_s
    );

    let student_config = teacher.model.config.with_hidden(SeqModelConfig::STUDENT_HIDDEN);
    let tconfig = TrainConfig {
        kd: KdConfig::mse(),
        ..TrainConfig::student_df().with_epochs(epochs(2, 500))
    };
    let (student, slog) = train_student_df(&teacher, &gen, student_config, &tconfig)?;
    println!(
        "student: logit MSE {:.4} -> {:.4} ({:.1}s)",
        slog.first_loss().unwrap(),
        slog.last_loss().unwrap(),
        slog.wall_clock_s
    );

    // Real data is only touched here, for scoring.
    let ds = make_dataset(&ScenarioConfig::default())?;
    let t = evaluate(&teacher.model, "teacher", &ds, Split::Test)?;
    let s = evaluate(&student.model, "student", &ds, Split::Test)?;
    for (a, b) in t.offsets.iter().zip(&s.offsets) {
        println!(
            "offset {}: teacher {:.3}/{:.3}  student {:.3}/{:.3}  (top-1/top-5)",
            a.offset, a.top1, a.top5, b.top1, b.top5
        );
    }
    println!("mean top-1 ratio {:.3}", s.mean_top1() / t.mean_top1());
    Ok(())
}
