//! The `dfkd` command line.
//!
//! Configuration is layered: a subcommand starts from its preset, then the
//! JSON file given by `--config` is merged over it, then explicit flags win.
//! Usage errors exit with 2. Any other failure prints one line
//! `error: <CODE>: <message>` to stderr and exits with 1.

use std::ffi::OsString;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::experiment::{run_manifest, Manifest};
use crate::losses::{GeneratorLossKind, StudentLossKind};
use crate::nn::{
    load_checkpoint, load_teacher, read_checkpoint_header, Checkpoint, GeneratorConfig, SeqModelConfig,
    CHECKPOINT_MAGIC,
};
use crate::pipelines::{
    train_generator, train_student_df, train_student_kd, train_student_scratch, train_teacher, RunLog,
    TrainConfig,
};
use crate::scenario::{
    load_dataset, make_dataset, read_dataset_header, save_dataset, ScenarioConfig, Split, DATASET_MAGIC,
};

#[derive(Debug, Parser)]
#[command(name = "dfkd", version, about = "Data-free distillation for LiDAR-aided beam tracking")]
struct Cli {
    /// Seed for data generation, initialization and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (or directory for `experiment`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file merged over the subcommand's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario and write a dataset file.
    GenData(GenDataArgs),
    /// Train the teacher and capture its feature statistics.
    TrainTeacher(DataTrainArgs),
    /// Invert a teacher into a generator.
    TrainGenerator(GeneratorArgs),
    /// Distill a student from teacher and generator, without data.
    DistillDf(DistillDfArgs),
    /// Standard distillation on real data.
    DistillKd(DistillKdArgs),
    /// Train a student-sized model on labels only.
    TrainScratch(DataTrainArgs),
    /// Top-1/Top-5 per horizon offset for a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run every arm of an experiment manifest.
    Experiment(ExperimentArgs),
    /// Print the header of a checkpoint or dataset file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Number of simulated trajectories.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Slots per trajectory.
    #[arg(long)]
    slots: Option<usize>,
    /// LiDAR feature dimension per frame.
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Standard deviation of feature noise.
    #[arg(long)]
    noise_std: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct Hyper {
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Samples per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Optimizer steps per epoch in data-free phases.
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    /// Softmax temperature for the KL student loss.
    #[arg(long)]
    temperature: Option<f64>,
    /// Weight of the distillation term against hard labels.
    #[arg(long)]
    gamma: Option<f64>,
    /// `kl` or `mse`.
    #[arg(long)]
    student_loss: Option<StudentLossKind>,
    /// `weighted`, `metadata_only`, `activation_only` or `entropy_only`.
    #[arg(long)]
    generator_loss: Option<GeneratorLossKind>,
    /// Weight of the activation term in the generator loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the entropy term in the generator loss.
    #[arg(long)]
    beta: Option<f64>,
    /// Hidden size of the trained model.
    #[arg(long)]
    hidden_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct DataTrainArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct GeneratorArgs {
    /// Teacher checkpoint.
    #[arg(long)]
    teacher: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct DistillDfArgs {
    /// Teacher checkpoint.
    #[arg(long)]
    teacher: PathBuf,
    /// Generator checkpoint.
    #[arg(long)]
    generator: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct DistillKdArgs {
    /// Teacher checkpoint.
    #[arg(long)]
    teacher: PathBuf,
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    /// `train`, `val` or `test`.
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    manifest: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    path: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.code());
            1
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<Option<Value>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => e.into(),
    })?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })?;
    if !v.is_object() {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: "config must be a JSON object".into(),
        });
    }
    Ok(Some(v))
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn strip_nulls(v: &mut Value) {
    if let Value::Object(map) = v {
        map.retain(|_, x| !x.is_null());
        map.values_mut().for_each(strip_nulls);
    }
}

/// `preset`, then the config file, then flags; only keys known to `T` are kept.
fn layered<T: Serialize + DeserializeOwned>(preset: &T, config: Option<&Value>, mut flags: Value) -> Result<T> {
    let mut v = serde_json::to_value(preset)?;
    let keys: Vec<String> = v.as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default();
    let mut apply = |src: &Value| {
        if let Value::Object(m) = src {
            let known = m.iter().filter(|(k, _)| keys.contains(k));
            let filtered: serde_json::Map<_, _> = known.map(|(k, x)| (k.clone(), x.clone())).collect();
            merge(&mut v, &Value::Object(filtered));
        }
    };
    if let Some(c) = config {
        apply(c);
    }
    strip_nulls(&mut flags);
    apply(&flags);
    serde_json::from_value(v).map_err(|e| Error::Parse {
        context: "configuration".into(),
        message: e.to_string(),
    })
}

fn train_config(cli: &Cli, preset: TrainConfig, h: &Hyper) -> Result<(TrainConfig, Option<usize>)> {
    let file = read_config(cli.config.as_deref())?;
    let flags = json!({
        "epochs": h.epochs,
        "batch_size": h.batch_size,
        "lr": h.lr,
        "steps_per_epoch": h.steps_per_epoch,
        "seed": cli.seed,
        "kd": {
            "temperature": h.temperature,
            "gamma": h.gamma,
            "student_loss": h.student_loss,
            "generator_loss": h.generator_loss,
            "weights": { "alpha": h.alpha, "beta": h.beta },
        },
    });
    let tc: TrainConfig = layered(&preset, file.as_ref(), flags)?;
    tc.validate()?;
    let hidden = h
        .hidden_dim
        .or_else(|| file.as_ref()?.get("hidden_dim")?.as_u64().map(|x| x as usize));
    Ok((tc, hidden))
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn save_with_log(ckpt: Checkpoint, logs: &[&RunLog], out: &Path) -> Result<()> {
    ckpt.save(out)?;
    for log in logs {
        let mut name = out.as_os_str().to_owned();
        name.push(format!(".{}.log.jsonl", log.pipeline));
        log.save(PathBuf::from(name))?;
    }
    log::info!("wrote {}", out.display());
    Ok(())
}

fn summarize(log: &RunLog) {
    if let (Some(a), Some(b)) = (log.first_loss(), log.last_loss()) {
        log::info!("{}: loss {a:.5} -> {b:.5} in {:.1}s", log.pipeline, log.wall_clock_s);
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => {
            let file = read_config(cli.config.as_deref())?;
            let flags = json!({
                "num_trajectories": a.trajectories,
                "slots_per_trajectory": a.slots,
                "feature_dim": a.feature_dim,
                "feature_noise_std": a.noise_std,
                "seed": cli.seed,
            });
            let config: ScenarioConfig = layered(&ScenarioConfig::default(), file.as_ref(), flags)?;
            config.validate()?;
            let ds = make_dataset(&config)?;
            let out = out_path(cli, "dataset.dfkd");
            save_dataset(&ds, &out)?;
            log::info!("wrote {} windows to {}", ds.len(), out.display());
        }
        Command::TrainTeacher(a) => {
            let (tc, hidden) = train_config(cli, TrainConfig::teacher(), &a.hyper)?;
            let ds = load_dataset(&a.data)?;
            let config = SeqModelConfig::teacher(ds.config.feature_dim);
            let config = config.with_hidden(hidden.unwrap_or(config.hidden_dim));
            let (teacher, log) = train_teacher(&ds, config, &tc)?;
            summarize(&log);
            save_with_log(Checkpoint::Teacher(teacher), &[&log], &out_path(cli, "teacher.ckpt"))?;
        }
        Command::TrainGenerator(a) => {
            let (tc, _) = train_config(cli, TrainConfig::generator(), &a.hyper)?;
            let teacher = load_teacher(&a.teacher)?;
            let gc = GeneratorConfig::for_model(&teacher.model.config);
            let (gen, log) = train_generator(&teacher, gc, &tc)?;
            summarize(&log);
            save_with_log(Checkpoint::Generator(gen), &[&log], &out_path(cli, "generator.ckpt"))?;
        }
        Command::DistillDf(a) => {
            let (tc, hidden) = train_config(cli, TrainConfig::student_df(), &a.hyper)?;
            let teacher = load_teacher(&a.teacher)?;
            let gen = load_checkpoint(&a.generator)?.into_generator()?;
            let config = teacher
                .model
                .config
                .with_hidden(hidden.unwrap_or(SeqModelConfig::STUDENT_HIDDEN));
            let (student, log) = train_student_df(&teacher, &gen, config, &tc)?;
            summarize(&log);
            save_with_log(Checkpoint::Student(student), &[&log], &out_path(cli, "student.ckpt"))?;
        }
        Command::DistillKd(a) => {
            let preset = match a.hyper.student_loss {
                Some(StudentLossKind::Mse) => TrainConfig::kd_mse(),
                _ => TrainConfig::kd(),
            };
            let (tc, hidden) = train_config(cli, preset, &a.hyper)?;
            let teacher = load_teacher(&a.teacher)?;
            let ds = load_dataset(&a.data)?;
            let config = teacher
                .model
                .config
                .with_hidden(hidden.unwrap_or(SeqModelConfig::STUDENT_HIDDEN));
            let (student, log) = train_student_kd(&teacher, &ds, config, &tc)?;
            summarize(&log);
            save_with_log(Checkpoint::Student(student), &[&log], &out_path(cli, "student.ckpt"))?;
        }
        Command::TrainScratch(a) => {
            let (tc, hidden) = train_config(cli, TrainConfig::scratch(), &a.hyper)?;
            let ds = load_dataset(&a.data)?;
            let config = SeqModelConfig::student(ds.config.feature_dim);
            let config = config.with_hidden(hidden.unwrap_or(config.hidden_dim));
            let (student, log) = train_student_scratch(&ds, config, &tc)?;
            summarize(&log);
            save_with_log(Checkpoint::Student(student), &[&log], &out_path(cli, "scratch.ckpt"))?;
        }
        Command::Eval(a) => {
            let model = load_checkpoint(&a.model)?.into_seq_model()?;
            let ds = load_dataset(&a.data)?;
            let name = a.model.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            let report = evaluate(&model, &name, &ds, a.split)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match &cli.out {
                Some(out) => std::fs::write(out, text)?,
                None => print!("{text}"),
            }
            for o in &report.offsets {
                log::info!("offset {}: top-1 {:.4} top-5 {:.4}", o.offset, o.top1, o.top5);
            }
        }
        Command::Experiment(a) => {
            let mut m = Manifest::load(&a.manifest)?;
            if let Some(seed) = cli.seed {
                m.seed = seed;
            }
            let ds = load_dataset(&m.dataset)?;
            let out = out_path(cli, "experiment");
            let outcome = run_manifest(&m, &ds, Some(&out))?;
            for arm in &outcome.arms {
                if let Ok(r) = &arm.result {
                    log::info!("{}: mean top-1 {:.4} top-5 {:.4}", arm.name, r.mean_top1(), r.mean_top5());
                }
            }
            let failures = outcome.failures();
            if !failures.is_empty() {
                let names: Vec<_> = failures.iter().map(|(n, _)| *n).collect();
                return Err(Error::Contract(format!("{} arm(s) failed: {}", names.len(), names.join(", "))));
            }
        }
        Command::Inspect(a) => {
            let summary = inspect(&a.path)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

/// Header of a checkpoint or dataset file as JSON, without per-sample arrays.
pub fn inspect(path: &Path) -> Result<Value> {
    let mut magic = [0u8; 8];
    std::fs::File::open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?
        .read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{} is too short to identify", path.display())))?;
    if &magic == CHECKPOINT_MAGIC {
        let h = read_checkpoint_header(path)?;
        Ok(json!({ "file": "checkpoint", "header": h }))
    } else if &magic == DATASET_MAGIC {
        let h = read_dataset_header(path)?;
        Ok(json!({
            "file": "dataset",
            "config": h.config,
            "config_hash": h.config_hash,
            "num_samples": h.num_samples,
            "seq_len": h.seq_len,
            "feature_dim": h.feature_dim,
            "num_heads": h.num_heads,
            "num_beams": h.num_beams,
            "skipped_trajectories": h.skipped_trajectories,
            "split_sizes": {
                "train": h.splits.train.len(),
                "val": h.splits.val.len(),
                "test": h.splits.test.len(),
            },
        }))
    } else {
        Err(Error::Format(format!("{} is neither a checkpoint nor a dataset", path.display())))
    }
}
