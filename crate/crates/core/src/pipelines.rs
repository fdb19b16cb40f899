//! Training procedures.
//!
//! * [`train_teacher`]: supervised pretraining, then capture of the feature
//!   mean/variance of the final hidden state over the train split.
//! * [`train_generator`]: inverts a frozen teacher into a noise-to-sequence
//!   generator.
//! * [`train_student_df`]: distills a student from teacher logits on
//!   generated data only. Its signature takes no dataset.
//! * [`train_student_kd`] and [`train_student_scratch`]: baselines on real data.
//!
//! Data-free phases have no dataset to sweep, so one epoch there means
//! `steps_per_epoch` optimizer steps (32 by default).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::eval::{accuracy_from_logits, batch_logits};
use crate::losses::{self, KdConfig, StudentLossKind};
use crate::nn::{
    Adam, Generator, GeneratorCheckpoint, GeneratorConfig, ParamSet, Provenance, SeqModel,
    SeqModelConfig, StudentCheckpoint, TeacherCheckpoint,
};
use crate::scenario::{Dataset, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Optimizer steps per epoch in data-free phases.
    pub steps_per_epoch: usize,
    pub kd: KdConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            steps_per_epoch: 32,
            kd: KdConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn teacher() -> Self {
        Self::default()
    }

    pub fn generator() -> Self {
        TrainConfig {
            epochs: 500,
            ..Self::default()
        }
    }

    pub fn student_df() -> Self {
        TrainConfig {
            epochs: 500,
            ..Self::default()
        }
    }

    /// Standard KD with the KL soft term (gamma 0.7, T 5).
    pub fn kd() -> Self {
        TrainConfig {
            epochs: 20,
            kd: KdConfig::kl(KdConfig::DEFAULT_TEMPERATURE),
            ..Self::default()
        }
    }

    /// KD with the logit-MSE soft term.
    pub fn kd_mse() -> Self {
        TrainConfig {
            epochs: 40,
            kd: KdConfig::mse(),
            ..Self::default()
        }
    }

    pub fn scratch() -> Self {
        Self::default()
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        TrainConfig { epochs, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Parameter("epochs, batch size and steps per epoch must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub terms: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_top1: Option<f64>,
}

/// Per-epoch training record for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub pipeline: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Set for data-free phases, where an epoch is a fixed number of steps.
    pub steps_per_epoch: Option<usize>,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine<'a> {
    Run {
        pipeline: &'a str,
        seed: u64,
        config: &'a serde_json::Value,
        steps_per_epoch: Option<usize>,
        warnings: &'a [String],
    },
    Epoch(&'a EpochRecord),
    Final {
        metrics: &'a BTreeMap<String, f64>,
        wall_clock_s: f64,
    },
}

impl RunLog {
    fn new(pipeline: &str, config: &TrainConfig, extra: serde_json::Value) -> Self {
        RunLog {
            pipeline: pipeline.to_string(),
            seed: config.seed,
            config: serde_json::json!({ "train": config, "model": extra }),
            steps_per_epoch: None,
            epochs: Vec::new(),
            final_metrics: BTreeMap::new(),
            warnings: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    /// Series of one logged loss term across epochs.
    pub fn term(&self, name: &str) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.terms.get(name).copied()).collect()
    }

    /// Equality of everything except wall-clock time.
    pub fn same_outcome(&self, other: &RunLog) -> bool {
        RunLog {
            wall_clock_s: 0.0,
            ..self.clone()
        } == RunLog {
            wall_clock_s: 0.0,
            ..other.clone()
        }
    }

    /// Line-delimited JSON: a `run` record, one `epoch` record per epoch,
    /// and a closing `final` record.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        let head = LogLine::Run {
            pipeline: &self.pipeline,
            seed: self.seed,
            config: &self.config,
            steps_per_epoch: self.steps_per_epoch,
            warnings: &self.warnings,
        };
        serde_json::to_writer(&mut *w, &head)?;
        writeln!(w)?;
        for e in &self.epochs {
            serde_json::to_writer(&mut *w, &LogLine::Epoch(e))?;
            writeln!(w)?;
        }
        let tail = LogLine::Final {
            metrics: &self.final_metrics,
            wall_clock_s: self.wall_clock_s,
        };
        serde_json::to_writer(&mut *w, &tail)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn check_model_matches_dataset(config: &SeqModelConfig, ds: &Dataset) -> Result<()> {
    let c = &ds.config;
    if config.input_dim != c.feature_dim
        || config.num_beams != c.array.num_beams
        || config.obs_len != c.obs_len
        || config.horizon != c.horizon
    {
        return Err(Error::ConfigMismatch(format!(
            "model {config:?} does not fit dataset (D={}, M={}, L={}, V={})",
            c.feature_dim, c.array.num_beams, c.obs_len, c.horizon
        )));
    }
    Ok(())
}

fn check_student_matches_teacher(student: &SeqModelConfig, teacher: &SeqModelConfig) -> Result<()> {
    if student.with_hidden(teacher.hidden_dim) != *teacher {
        return Err(Error::ConfigMismatch(format!(
            "student {student:?} differs from teacher {teacher:?} beyond hidden size"
        )));
    }
    Ok(())
}

fn shuffle_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

const STREAM_SHUFFLE: u64 = 11;
const STREAM_NOISE: u64 = 13;

fn mean_top1_on(model: &SeqModel, ds: &Dataset, idx: &[usize]) -> Result<Option<f64>> {
    if idx.is_empty() {
        return Ok(None);
    }
    let logits = batch_logits(model, ds, idx)?;
    let acc = accuracy_from_logits(&logits, ds, idx, model.config.num_beams, 1);
    Ok(Some(acc.iter().sum::<f64>() / acc.len() as f64))
}

/// What a supervised run optimizes per batch.
enum Objective<'a> {
    CrossEntropy,
    Distill { teacher: &'a SeqModel, kd: KdConfig },
}

fn train_supervised(
    pipeline: &str,
    ds: &Dataset,
    mut model: SeqModel,
    tconfig: &TrainConfig,
    objective: Objective<'_>,
) -> Result<(SeqModel, RunLog)> {
    tconfig.validate()?;
    check_model_matches_dataset(&model.config, ds)?;
    let mut train = ds.split_indices(Split::Train);
    if train.is_empty() {
        return Err(Error::Contract("train split is empty".into()));
    }
    let val = ds.split_indices(Split::Val);
    let start = Instant::now();
    let mut log = RunLog::new(pipeline, tconfig, serde_json::to_value(model.config)?);
    log::info!(
        "{pipeline}: {} parameters, {} train windows, {} epochs",
        model.params.num_params(),
        train.len(),
        tconfig.epochs
    );
    let mut opt = Adam::with_lr(tconfig.lr);
    let mut rng = shuffle_rng(tconfig.seed, STREAM_SHUFFLE);
    let shape = |b: usize| [b, model.config.seq_len(), model.config.input_dim];
    for epoch in 1..=tconfig.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train.chunks(tconfig.batch_size) {
            let (x, y) = ds.batch(batch);
            let mut g = Graph::new();
            let xv = g.constant(Tensor::new(&shape(batch.len()), x.clone())?);
            let out = model.forward(&mut g, xv, true)?;
            let loss = match &objective {
                Objective::CrossEntropy => losses::cross_entropy_loss(&mut g, out.logits, &y)?,
                Objective::Distill { teacher, kd } => {
                    let (tl, _) = teacher.infer(&x, batch.len())?;
                    let tv = g.constant(Tensor::new(g.shape(out.logits), tl)?);
                    match kd.student_loss {
                        StudentLossKind::Kl => {
                            losses::kd_loss(&mut g, tv, out.logits, &y, kd.gamma, kd.require_temperature()?)?
                        }
                        StudentLossKind::Mse => losses::kd_mse_loss(&mut g, tv, out.logits, &y, kd.gamma)?,
                    }
                }
            };
            g.backward(loss)?;
            total += g.item(loss)? * batch.len() as f64;
            model.params.pull_grads(&g, &out.param_vars);
            opt.step(&mut model.params)?;
        }
        let record = EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            terms: BTreeMap::new(),
            val_top1: mean_top1_on(&model, ds, &val)?,
        };
        log::debug!("{pipeline} epoch {epoch}: loss {:.5} val top-1 {:?}", record.loss, record.val_top1);
        log.epochs.push(record);
    }
    model.params.zero_grads();
    if !model.params.is_finite() {
        return Err(Error::Contract(format!("{pipeline}: parameters diverged")));
    }
    if let Some(v) = log.epochs.last().and_then(|e| e.val_top1) {
        log.final_metrics.insert("val_top1".into(), v);
    }
    log.final_metrics
        .insert("num_params".into(), model.params.num_params() as f64);
    log.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((model, log))
}

/// Mean and biased variance of the final hidden state over the train split.
pub fn capture_metadata(model: &SeqModel, ds: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let idx = ds.split_indices(Split::Train);
    if idx.is_empty() {
        return Err(Error::Contract("train split is empty".into()));
    }
    let h = model.config.hidden_dim;
    let mut sum = vec![0.0; h];
    let mut sum_sq = vec![0.0; h];
    for chunk in idx.chunks(256) {
        let (x, _) = ds.batch(chunk);
        let (_, hidden) = model.infer(&x, chunk.len())?;
        for row in hidden.chunks(h) {
            for ((s, q), v) in sum.iter_mut().zip(&mut sum_sq).zip(row) {
                *s += v;
                *q += v * v;
            }
        }
    }
    let n = idx.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let var = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n - m * m).max(0.0))
        .collect();
    Ok((mean, var))
}

/// Supervised teacher pretraining followed by metadata capture.
pub fn train_teacher(ds: &Dataset, config: SeqModelConfig, tconfig: &TrainConfig) -> Result<(TeacherCheckpoint, RunLog)> {
    let model = SeqModel::new(config, tconfig.seed)?;
    let (model, mut log) = train_supervised("teacher", ds, model, tconfig, Objective::CrossEntropy)?;
    let (meta_mean, meta_var) = capture_metadata(&model, ds)?;
    log.final_metrics.insert(
        "meta_var_mean".into(),
        meta_var.iter().sum::<f64>() / meta_var.len() as f64,
    );
    let ckpt = TeacherCheckpoint {
        model,
        meta_mean,
        meta_var,
        provenance: Provenance {
            pipeline: "teacher".into(),
            seed: tconfig.seed,
            epochs: tconfig.epochs,
        },
    };
    ckpt.validate()?;
    Ok((ckpt, log))
}

/// Plain cross-entropy training of a student-sized model.
pub fn train_student_scratch(ds: &Dataset, config: SeqModelConfig, tconfig: &TrainConfig) -> Result<(StudentCheckpoint, RunLog)> {
    let model = SeqModel::new(config, tconfig.seed)?;
    let (model, log) = train_supervised("scratch", ds, model, tconfig, Objective::CrossEntropy)?;
    Ok((
        StudentCheckpoint {
            model,
            provenance: Provenance {
                pipeline: "scratch".into(),
                seed: tconfig.seed,
                epochs: tconfig.epochs,
            },
        },
        log,
    ))
}

/// Standard KD on real data: `gamma * soft + (1 - gamma) * CE`, where the
/// soft term is KL (`StudentLossKind::Kl`) or logit MSE (`Mse`).
pub fn train_student_kd(
    teacher: &TeacherCheckpoint,
    ds: &Dataset,
    config: SeqModelConfig,
    tconfig: &TrainConfig,
) -> Result<(StudentCheckpoint, RunLog)> {
    check_student_matches_teacher(&config, &teacher.model.config)?;
    let kd = tconfig.kd;
    if !(0.0..=1.0).contains(&kd.gamma) {
        return Err(Error::Parameter(format!("gamma must be in [0, 1], got {}", kd.gamma)));
    }
    if kd.student_loss == StudentLossKind::Kl {
        kd.require_temperature()?;
    }
    let name = match kd.student_loss {
        StudentLossKind::Kl => "kd",
        StudentLossKind::Mse => "kd_mse",
    };
    let model = SeqModel::new(config, tconfig.seed)?;
    let objective = Objective::Distill {
        teacher: &teacher.model,
        kd,
    };
    let (model, log) = train_supervised(name, ds, model, tconfig, objective)?;
    Ok((
        StudentCheckpoint {
            model,
            provenance: Provenance {
                pipeline: name.into(),
                seed: tconfig.seed,
                epochs: tconfig.epochs,
            },
        },
        log,
    ))
}

/// Inverts the frozen teacher into a generator using the configured
/// generator loss. Every term is logged even when it is not optimized.
pub fn train_generator(
    teacher: &TeacherCheckpoint,
    gconfig: GeneratorConfig,
    tconfig: &TrainConfig,
) -> Result<(GeneratorCheckpoint, RunLog)> {
    tconfig.validate()?;
    teacher.validate()?;
    gconfig.validate()?;
    gconfig.check_compatible(&teacher.model.config)?;
    let kd = tconfig.kd;
    let start = Instant::now();
    let mut gen = Generator::new(gconfig, tconfig.seed)?;
    let mut log = RunLog::new("generator", tconfig, serde_json::to_value(gconfig)?);
    log.steps_per_epoch = Some(tconfig.steps_per_epoch);
    log.config["generator_loss"] = serde_json::to_value(kd.generator_loss)?;
    log.config["weights"] = serde_json::to_value(kd.weights)?;
    let teacher_sum = teacher.model.params.checksum();
    let mut opt = Adam::with_lr(tconfig.lr);
    let mut rng = shuffle_rng(tconfig.seed, STREAM_NOISE);
    log::info!(
        "generator: {} parameters, {:?} loss, {} epochs x {} steps",
        gen.params.num_params(),
        kd.generator_loss,
        tconfig.epochs,
        tconfig.steps_per_epoch
    );
    for epoch in 1..=tconfig.epochs {
        let (mut total, mut meta, mut act, mut ent) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..tconfig.steps_per_epoch {
            let mut g = Graph::new();
            let noise = g.constant(gen.sample_noise(&mut rng, tconfig.batch_size));
            let out = gen.forward(&mut g, noise, true)?;
            let t = teacher.model.forward(&mut g, out.samples, false)?;
            let loss = losses::generator_loss(
                &mut g,
                kd.generator_loss,
                kd.weights,
                t.last_hidden,
                t.logits,
                &teacher.meta_mean,
                &teacher.meta_var,
            )?;
            g.backward(loss.total)?;
            total += g.item(loss.total)?;
            meta += loss.metadata;
            act += loss.activation;
            ent += loss.entropy;
            gen.params.pull_grads(&g, &out.param_vars);
            opt.step(&mut gen.params)?;
        }
        let n = tconfig.steps_per_epoch as f64;
        let terms = BTreeMap::from([
            ("metadata".to_string(), meta / n),
            ("activation".to_string(), act / n),
            ("entropy".to_string(), ent / n),
        ]);
        log::debug!("generator epoch {epoch}: loss {:.6} {terms:?}", total / n);
        log.epochs.push(EpochRecord {
            epoch,
            loss: total / n,
            terms,
            val_top1: None,
        });
    }
    gen.params.zero_grads();
    if teacher.model.params.checksum() != teacher_sum {
        return Err(Error::Contract("teacher parameters changed during generator training".into()));
    }
    if !gen.params.is_finite() {
        return Err(Error::Contract("generator parameters diverged".into()));
    }
    for name in ["metadata", "activation", "entropy"] {
        if let Some(v) = log.term(name).last() {
            log.final_metrics.insert(name.into(), *v);
        }
    }
    log.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((
        GeneratorCheckpoint {
            generator: gen,
            provenance: Provenance {
                pipeline: "generator".into(),
                seed: tconfig.seed,
                epochs: tconfig.epochs,
            },
        },
        log,
    ))
}

/// Distills a student from the frozen teacher on generator output only.
pub fn train_student_df(
    teacher: &TeacherCheckpoint,
    generator: &GeneratorCheckpoint,
    config: SeqModelConfig,
    tconfig: &TrainConfig,
) -> Result<(StudentCheckpoint, RunLog)> {
    tconfig.validate()?;
    let kd = tconfig.kd;
    let warnings = kd.validate()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    check_student_matches_teacher(&config, &teacher.model.config)?;
    let gen = &generator.generator;
    gen.config.check_compatible(&teacher.model.config)?;
    let start = Instant::now();
    let mut student = SeqModel::new(config, tconfig.seed)?;
    let mut log = RunLog::new("distill_df", tconfig, serde_json::to_value(config)?);
    log.steps_per_epoch = Some(tconfig.steps_per_epoch);
    log.warnings = warnings;
    let frozen = (teacher.model.params.checksum(), gen.params.checksum());
    let mut opt = Adam::with_lr(tconfig.lr);
    let mut rng = shuffle_rng(tconfig.seed, STREAM_NOISE);
    let b = tconfig.batch_size;
    let shape = [b, config.seq_len(), config.input_dim];
    for epoch in 1..=tconfig.epochs {
        let mut total = 0.0;
        for _ in 0..tconfig.steps_per_epoch {
            let x = gen.generate(gen.sample_noise(&mut rng, b))?;
            let (tl, _) = teacher.model.infer(&x, b)?;
            let mut g = Graph::new();
            let xv = g.constant(Tensor::new(&shape, x)?);
            let out = student.forward(&mut g, xv, true)?;
            let tv = g.constant(Tensor::new(g.shape(out.logits), tl)?);
            let loss = match kd.student_loss {
                StudentLossKind::Kl => losses::kl_loss(&mut g, tv, out.logits, kd.require_temperature()?)?,
                StudentLossKind::Mse => losses::mse_logit_loss(&mut g, tv, out.logits)?,
            };
            g.backward(loss)?;
            total += g.item(loss)?;
            student.params.pull_grads(&g, &out.param_vars);
            opt.step(&mut student.params)?;
        }
        let loss = total / tconfig.steps_per_epoch as f64;
        log::debug!("distill_df epoch {epoch}: loss {loss:.6}");
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            terms: BTreeMap::new(),
            val_top1: None,
        });
    }
    student.params.zero_grads();
    if (teacher.model.params.checksum(), gen.params.checksum()) != frozen {
        return Err(Error::Contract("frozen parameters changed during student training".into()));
    }
    if !student.params.is_finite() {
        return Err(Error::Contract("student parameters diverged".into()));
    }
    log.final_metrics
        .insert("num_params".into(), student.params.num_params() as f64);
    log.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((
        StudentCheckpoint {
            model: student,
            provenance: Provenance {
                pipeline: "distill_df".into(),
                seed: tconfig.seed,
                epochs: tconfig.epochs,
            },
        },
        log,
    ))
}
