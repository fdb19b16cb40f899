//! Small configurations that train in seconds, plus the determinism check.

use dfkd_beam::eval::evaluate;
use dfkd_beam::losses::KdConfig;
use dfkd_beam::nn::{Checkpoint, GeneratorConfig, SeqModelConfig, TeacherCheckpoint};
use dfkd_beam::pipelines::{
    train_generator, train_student_df, train_student_kd, train_student_scratch, train_teacher, RunLog, TrainConfig,
};
use dfkd_beam::scenario::{make_dataset, Dataset, ScenarioConfig, Split};

pub fn tiny_scene() -> ScenarioConfig {
    ScenarioConfig { num_trajectories: 24, slots_per_trajectory: 20, feature_dim: 8, ..ScenarioConfig::default() }
}

pub fn tiny_dataset() -> Dataset {
    make_dataset(&tiny_scene()).unwrap()
}

pub fn teacher_config(ds: &Dataset) -> SeqModelConfig {
    SeqModelConfig::teacher(ds.config.feature_dim).with_hidden(12)
}

pub fn student_config(ds: &Dataset) -> SeqModelConfig {
    teacher_config(ds).with_hidden(6)
}

pub fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, steps_per_epoch: 4, batch_size: 16, seed, ..TrainConfig::default() }
}

pub fn small_generator(teacher: &TeacherCheckpoint) -> GeneratorConfig {
    GeneratorConfig { noise_dim: 24, hidden_dim: 16, ..GeneratorConfig::for_model(&teacher.model.config) }
}

pub fn bytes(ckpt: Checkpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    ckpt.write_to(&mut buf).unwrap();
    buf
}

pub fn tiny_teacher(ds: &Dataset, seed: u64) -> (TeacherCheckpoint, RunLog) {
    train_teacher(ds, teacher_config(ds), &quick(3, seed)).unwrap()
}

/// Runs every pipeline twice with the same seed and config; returns the
/// names of those whose checkpoint bytes, run log or report differ.
pub fn determinism_violations(ds: &Dataset, seed: u64) -> Vec<String> {
    let mut bad = Vec::new();
    let run = || -> Vec<(&'static str, Vec<u8>, RunLog, String)> {
        let report = |m: &dfkd_beam::nn::SeqModel| serde_json::to_string(&evaluate(m, "m", ds, Split::Test).unwrap()).unwrap();
        let (t, tl) = tiny_teacher(ds, seed);
        let tr = report(&t.model);
        let (g, gl) = train_generator(&t, small_generator(&t), &quick(3, seed)).unwrap();
        let df = TrainConfig { kd: KdConfig::mse(), ..quick(3, seed) };
        let (s, sl) = train_student_df(&t, &g, student_config(ds), &df).unwrap();
        let sr = report(&s.model);
        let kd = TrainConfig { kd: KdConfig::kl(5.0), ..quick(2, seed) };
        let (k, kl) = train_student_kd(&t, ds, student_config(ds), &kd).unwrap();
        let kr = report(&k.model);
        let km = TrainConfig { kd: KdConfig::mse(), ..quick(2, seed) };
        let (km_s, km_l) = train_student_kd(&t, ds, student_config(ds), &km).unwrap();
        let kmr = report(&km_s.model);
        let (sc, scl) = train_student_scratch(ds, student_config(ds), &quick(2, seed)).unwrap();
        let scr = report(&sc.model);
        vec![
            ("teacher", bytes(Checkpoint::Teacher(t)), tl, tr),
            ("generator", bytes(Checkpoint::Generator(g)), gl, String::new()),
            ("distill_df", bytes(Checkpoint::Student(s)), sl, sr),
            ("kd", bytes(Checkpoint::Student(k)), kl, kr),
            ("kd_mse", bytes(Checkpoint::Student(km_s)), km_l, kmr),
            ("scratch", bytes(Checkpoint::Student(sc)), scl, scr),
        ]
    };
    let (a, b) = (run(), run());
    for (x, y) in a.iter().zip(&b) {
        if x.1 != y.1 {
            bad.push(format!("{}: checkpoint bytes differ", x.0));
        }
        if !x.2.same_outcome(&y.2) {
            bad.push(format!("{}: run logs differ", x.0));
        }
        if x.3 != y.3 {
            bad.push(format!("{}: eval reports differ", x.0));
        }
    }
    bad
}
