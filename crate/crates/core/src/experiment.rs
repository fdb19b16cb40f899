//! Manifest-driven experiments: several training arms sharing one dataset,
//! teacher and seed, evaluated on one split and merged into a table.
//!
//! A manifest is JSON:
//!
//! ```json
//! {
//!   "name": "generator-loss-ablation",
//!   "seed": 0,
//!   "dataset": "data.bin",
//!   "teacher_epochs": 100,
//!   "arms": [
//!     { "name": "weighted", "pipeline": "distill_df",
//!       "kd": { "generator_loss": "weighted" } },
//!     { "name": "kd", "pipeline": "distill_kd",
//!       "kd": { "student_loss": "kl", "temperature": 5.0 } }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `teacher` may
//! name an existing teacher checkpoint instead of `teacher_epochs`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::losses::KdConfig;
use crate::nn::{load_teacher, Checkpoint, GeneratorConfig, SeqModelConfig, TeacherCheckpoint};
use crate::pipelines::{
    train_generator, train_student_df, train_student_kd, train_student_scratch, train_teacher, RunLog,
    TrainConfig,
};
use crate::scenario::{load_dataset, Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPipeline {
    /// Evaluate the shared teacher as-is.
    Teacher,
    /// Generator inversion followed by data-free student training.
    DistillDf,
    DistillKd,
    Scratch,
}

impl ArmPipeline {
    fn default_train(self) -> TrainConfig {
        match self {
            ArmPipeline::Teacher => TrainConfig::teacher(),
            ArmPipeline::DistillDf => TrainConfig::student_df(),
            ArmPipeline::DistillKd => TrainConfig::kd(),
            ArmPipeline::Scratch => TrainConfig::scratch(),
        }
    }
}

impl fmt::Display for ArmPipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArmPipeline::Teacher => "teacher",
            ArmPipeline::DistillDf => "distill_df",
            ArmPipeline::DistillKd => "distill_kd",
            ArmPipeline::Scratch => "scratch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub name: String,
    pub pipeline: ArmPipeline,
    /// Loss selection; unspecified fields take the pipeline's defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<KdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Generator epochs for `distill_df` (default 500).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Student hidden size (default 32).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
}

impl Arm {
    pub fn new(name: &str, pipeline: ArmPipeline) -> Self {
        Arm {
            name: name.to_string(),
            pipeline,
            kd: None,
            epochs: None,
            generator_epochs: None,
            steps_per_epoch: None,
            batch_size: None,
            lr: None,
            hidden_dim: None,
        }
    }

    fn apply(&self, base: TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lr: self.lr.unwrap_or(base.lr),
            steps_per_epoch: self.steps_per_epoch.unwrap_or(base.steps_per_epoch),
            kd: self.kd.unwrap_or(base.kd),
            seed,
        }
    }

    /// Training configuration for the student (or only) phase.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        self.apply(self.pipeline.default_train(), seed)
    }

    /// Training configuration for the generator phase of `distill_df`.
    pub fn generator_config(&self, seed: u64) -> TrainConfig {
        let base = self.apply(TrainConfig::generator(), seed);
        TrainConfig {
            epochs: self.generator_epochs.unwrap_or(TrainConfig::generator().epochs),
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: PathBuf,
    /// Existing teacher checkpoint; trained from `dataset` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_epochs: Option<usize>,
    #[serde(default = "default_split")]
    pub eval_split: Split,
    pub arms: Vec<Arm>,
}

fn default_split() -> Split {
    Split::Test
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Parameter(format!("manifest `{}` has no arms", self.name)));
        }
        let mut seen = BTreeSet::new();
        for arm in &self.arms {
            if arm.name.is_empty() || arm.name.contains(['/', '\\']) {
                return Err(Error::Parameter(format!("invalid arm name `{}`", arm.name)));
            }
            if !seen.insert(arm.name.as_str()) {
                return Err(Error::Parameter(format!("duplicate arm name `{}`", arm.name)));
            }
            arm.train_config(self.seed).validate()?;
        }
        if self.teacher.is_some() && self.teacher_epochs.is_some() {
            return Err(Error::Parameter("give either `teacher` or `teacher_epochs`, not both".into()));
        }
        Ok(())
    }

    /// Parses and validates a manifest; parse errors carry line and column.
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("{context}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        let mut m = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.dataset = base.join(&m.dataset);
        m.teacher = m.teacher.map(|t| base.join(t));
        Ok(m)
    }
}

impl FromStr for Manifest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_json(s, "manifest")
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub arm: String,
    pub pipeline: String,
    pub seed: u64,
    pub offset: usize,
    pub k: usize,
    pub accuracy: f64,
}

pub fn comparison_rows(arms: &[(String, ArmPipeline, EvalReport)], seed: u64) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for (name, pipeline, report) in arms {
        for o in &report.offsets {
            for (k, accuracy) in [(1, o.top1), (5, o.top5)] {
                rows.push(ComparisonRow {
                    arm: name.clone(),
                    pipeline: pipeline.to_string(),
                    seed,
                    offset: o.offset,
                    k,
                    accuracy,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub name: String,
    pub pipeline: ArmPipeline,
    pub result: std::result::Result<EvalReport, String>,
    pub logs: Vec<RunLog>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub teacher_report: EvalReport,
    pub arms: Vec<ArmOutcome>,
    pub rows: Vec<ComparisonRow>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.arms
            .iter()
            .filter_map(|a| a.result.as_ref().err().map(|e| (a.name.as_str(), e.as_str())))
            .collect()
    }

    pub fn report(&self, arm: &str) -> Option<&EvalReport> {
        self.arms.iter().find(|a| a.name == arm)?.result.as_ref().ok()
    }
}

fn obtain_teacher(m: &Manifest, ds: &Dataset, out: Option<&Path>) -> Result<TeacherCheckpoint> {
    if let Some(path) = &m.teacher {
        return load_teacher(path);
    }
    let tc = TrainConfig::teacher().with_seed(m.seed);
    let tc = tc.clone().with_epochs(m.teacher_epochs.unwrap_or(tc.epochs));
    let (teacher, log) = train_teacher(ds, SeqModelConfig::teacher(ds.config.feature_dim), &tc)?;
    if let Some(dir) = out {
        log.save(dir.join("teacher.log.jsonl"))?;
        let ckpt = Checkpoint::Teacher(teacher);
        ckpt.save(dir.join("teacher.ckpt"))?;
        return ckpt.into_teacher();
    }
    Ok(teacher)
}

fn run_arm(
    arm: &Arm,
    seed: u64,
    split: Split,
    teacher: &TeacherCheckpoint,
    ds: &Dataset,
) -> Result<(EvalReport, Vec<RunLog>, Option<Checkpoint>)> {
    let student_cfg = teacher
        .model
        .config
        .with_hidden(arm.hidden_dim.unwrap_or(SeqModelConfig::STUDENT_HIDDEN));
    let tc = arm.train_config(seed);
    match arm.pipeline {
        ArmPipeline::Teacher => Ok((evaluate(&teacher.model, &arm.name, ds, split)?, vec![], None)),
        ArmPipeline::DistillDf => {
            let gc = GeneratorConfig::for_model(&teacher.model.config);
            let (gen, glog) = train_generator(teacher, gc, &arm.generator_config(seed))?;
            let (student, slog) = train_student_df(teacher, &gen, student_cfg, &tc)?;
            let report = evaluate(&student.model, &arm.name, ds, split)?;
            Ok((report, vec![glog, slog], Some(Checkpoint::Student(student))))
        }
        ArmPipeline::DistillKd => {
            let (student, log) = train_student_kd(teacher, ds, student_cfg, &tc)?;
            let report = evaluate(&student.model, &arm.name, ds, split)?;
            Ok((report, vec![log], Some(Checkpoint::Student(student))))
        }
        ArmPipeline::Scratch => {
            let (student, log) = train_student_scratch(ds, student_cfg, &tc)?;
            let report = evaluate(&student.model, &arm.name, ds, split)?;
            Ok((report, vec![log], Some(Checkpoint::Student(student))))
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs every arm in order against an already loaded dataset. A failing arm
/// is recorded and the remaining arms still run. With `out` set, writes
/// `<arm>.report.json`, `<arm>.log.jsonl`, `<arm>.ckpt`, `comparison.csv`
/// and `comparison.json` there.
pub fn run_manifest(m: &Manifest, ds: &Dataset, out: Option<&Path>) -> Result<ExperimentOutcome> {
    m.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let teacher = obtain_teacher(m, ds, out)?;
    let teacher_report = evaluate(&teacher.model, "teacher", ds, m.eval_split)?;
    let mut arms = Vec::new();
    for arm in &m.arms {
        log::info!("experiment {}: arm `{}` ({})", m.name, arm.name, arm.pipeline);
        let outcome = match run_arm(arm, m.seed, m.eval_split, &teacher, ds) {
            Ok((report, logs, ckpt)) => {
                if let Some(dir) = out {
                    write_json(&dir.join(format!("{}.report.json", arm.name)), &report)?;
                    for log in &logs {
                        let suffix = if logs.len() > 1 { format!(".{}", log.pipeline) } else { String::new() };
                        log.save(dir.join(format!("{}{suffix}.log.jsonl", arm.name)))?;
                    }
                    if let Some(ckpt) = ckpt {
                        ckpt.save(dir.join(format!("{}.ckpt", arm.name)))?;
                    }
                }
                ArmOutcome {
                    name: arm.name.clone(),
                    pipeline: arm.pipeline,
                    result: Ok(report),
                    logs,
                }
            }
            Err(e) => {
                log::error!("arm `{}` failed: {}: {e}", arm.name, e.code());
                ArmOutcome {
                    name: arm.name.clone(),
                    pipeline: arm.pipeline,
                    result: Err(format!("{}: {e}", e.code())),
                    logs: vec![],
                }
            }
        };
        arms.push(outcome);
    }
    let done: Vec<_> = arms
        .iter()
        .filter_map(|a| a.result.as_ref().ok().map(|r| (a.name.clone(), a.pipeline, r.clone())))
        .collect();
    let rows = comparison_rows(&done, m.seed);
    if let Some(dir) = out {
        let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
        let failures: Vec<_> = arms
            .iter()
            .filter_map(|a| a.result.as_ref().err().map(|e| serde_json::json!({ "arm": a.name, "error": e })))
            .collect();
        write_json(
            &dir.join("comparison.json"),
            &serde_json::json!({
                "experiment": m.name,
                "seed": m.seed,
                "split": m.eval_split,
                "teacher": teacher_report,
                "rows": rows,
                "failures": failures,
            }),
        )?;
    }
    Ok(ExperimentOutcome {
        manifest: m.clone(),
        teacher_report,
        arms,
        rows,
    })
}

/// Loads a manifest and its dataset, then runs it.
pub fn run_experiment(manifest: impl AsRef<Path>, out: Option<&Path>) -> Result<ExperimentOutcome> {
    let m = Manifest::load(manifest)?;
    let ds = load_dataset(&m.dataset)?;
    run_manifest(&m, &ds, out)
}
