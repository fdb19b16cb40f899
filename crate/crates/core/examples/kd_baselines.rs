//! Data-driven baselines against a trained teacher: KD with softened KL,
//! KD with logit MSE and a student trained from scratch on real labels.
//!
//! ```text
//! cargo run --release --example train_teacher -- 100 teacher.ckpt
//! cargo run --release --example kd_baselines -- teacher.ckpt [epochs]
//! ```

use dfkd_beam::eval::{evaluate, EvalReport};
use dfkd_beam::nn::{load_teacher, SeqModelConfig};
use dfkd_beam::pipelines::{train_student_kd, train_student_scratch, TrainConfig};
use dfkd_beam::scenario::{make_dataset, ScenarioConfig, Split};

fn row(r: &EvalReport, teacher: &EvalReport) {
    let t1: Vec<String> = r.offsets.iter().map(|o| format!("{:.3}", o.top1)).collect();
    println!(
        "{:<10} top-1 [{}] mean {:.3} ({:.2}x teacher)  top-5 mean {:.3}",
        r.model,
        t1.join(" "),
        r.mean_top1(),
        r.mean_top1() / teacher.mean_top1(),
        r.mean_top5()
    );
}

fn main() -> dfkd_beam::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let teacher_path = args.next().expect("usage: kd_baselines teacher.ckpt [epochs]");
    let epochs: Option<usize> = args.next().map(|a| a.parse().expect("epochs must be an integer"));
    let with = |tc: TrainConfig| match epochs {
        Some(e) => tc.with_epochs(e),
        None => tc,
    };

    let teacher = load_teacher(&teacher_path)?;
    let ds = make_dataset(&ScenarioConfig::default())?;
    let student = teacher.model.config.with_hidden(SeqModelConfig::STUDENT_HIDDEN);

    let t = evaluate(&teacher.model, "teacher", &ds, Split::Test)?;
    let (kd, _) = train_student_kd(&teacher, &ds, student, &with(TrainConfig::kd()))?;
    let (kd_mse, _) = train_student_kd(&teacher, &ds, student, &with(TrainConfig::kd_mse()))?;
    let (scratch, _) = train_student_scratch(&ds, student, &with(TrainConfig::scratch()))?;

    row(&t, &t);
    row(&evaluate(&kd.model, "kd", &ds, Split::Test)?, &t);
    row(&evaluate(&kd_mse.model, "kd_mse", &ds, Split::Test)?, &t);
    row(&evaluate(&scratch.model, "scratch", &ds, Split::Test)?, &t);
    Ok(())
}
