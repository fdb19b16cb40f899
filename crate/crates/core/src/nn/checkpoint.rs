//! Binary checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"DFKDCKPT"
//! 8       4     format version (u32, currently 1)
//! 12      8     header length N (u64)
//! 20      N     UTF-8 JSON header
//! 20+N    ...   f64 payloads, one per header tensor, in header order
//! ```
//!
//! The header carries `kind`, the model `config`, `provenance`, and a
//! `tensors` list of `{name, shape}`. Teacher checkpoints add the tensors
//! `meta.mean` and `meta.var` (length H each).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{GeneratorConfig, SeqModelConfig};
use super::generator::{Generator, GeneratorParams};
use super::params::ParamSet;
use super::seq_model::{SeqModel, SeqModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DFKDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const META_MEAN: &str = "meta.mean";
const META_VAR: &str = "meta.var";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Teacher,
    Student,
    Generator,
}

/// How a set of parameters was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline: String,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub config: serde_json::Value,
    pub provenance: Provenance,
    pub tensors: Vec<TensorEntry>,
}

/// Pretrained teacher together with the feature statistics of its final
/// hidden state over the real training split.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherCheckpoint {
    pub model: SeqModel,
    pub meta_mean: Vec<f64>,
    pub meta_var: Vec<f64>,
    pub provenance: Provenance,
}

impl TeacherCheckpoint {
    pub fn validate(&self) -> Result<()> {
        let h = self.model.config.hidden_dim;
        if self.meta_mean.len() != h || self.meta_var.len() != h {
            return Err(Error::shape(
                "teacher metadata",
                &[h],
                &[self.meta_mean.len(), self.meta_var.len()],
            ));
        }
        if self.meta_var.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Contract("metadata variance must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentCheckpoint {
    pub model: SeqModel,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCheckpoint {
    pub generator: Generator,
    pub provenance: Provenance,
}

/// Any checkpoint, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Teacher(TeacherCheckpoint),
    Student(StudentCheckpoint),
    Generator(GeneratorCheckpoint),
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        match self {
            Checkpoint::Teacher(_) => ModelKind::Teacher,
            Checkpoint::Student(_) => ModelKind::Student,
            Checkpoint::Generator(_) => ModelKind::Generator,
        }
    }

    /// The sequence model inside a teacher or student checkpoint.
    pub fn seq_model(&self) -> Option<&SeqModel> {
        match self {
            Checkpoint::Teacher(t) => Some(&t.model),
            Checkpoint::Student(s) => Some(&s.model),
            Checkpoint::Generator(_) => None,
        }
    }

    pub fn into_teacher(self) -> Result<TeacherCheckpoint> {
        match self {
            Checkpoint::Teacher(t) => Ok(t),
            _ => Err(Error::MetadataMissing),
        }
    }

    pub fn into_generator(self) -> Result<GeneratorCheckpoint> {
        match self {
            Checkpoint::Generator(g) => Ok(g),
            other => Err(Error::Contract(format!(
                "expected a generator checkpoint, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn into_seq_model(self) -> Result<SeqModel> {
        match self {
            Checkpoint::Teacher(t) => Ok(t.model),
            Checkpoint::Student(s) => Ok(s.model),
            Checkpoint::Generator(_) => Err(Error::Contract(
                "expected a teacher or student checkpoint, found a generator".into(),
            )),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_from(&mut bytes.as_slice())
    }

    fn parts(&self) -> (ModelKind, serde_json::Value, &Provenance, Vec<(&str, &[usize], &[f64])>) {
        let mut tensors: Vec<(&str, &[usize], &[f64])> = Vec::new();
        let (config, prov) = match self {
            Checkpoint::Teacher(t) => {
                for (n, p) in t.model.params.params() {
                    tensors.push((n, p.shape(), p.data()));
                }
                (serde_json::to_value(t.model.config), &t.provenance)
            }
            Checkpoint::Student(s) => {
                for (n, p) in s.model.params.params() {
                    tensors.push((n, p.shape(), p.data()));
                }
                (serde_json::to_value(s.model.config), &s.provenance)
            }
            Checkpoint::Generator(g) => {
                for (n, p) in g.generator.params.params() {
                    tensors.push((n, p.shape(), p.data()));
                }
                (serde_json::to_value(g.generator.config), &g.provenance)
            }
        };
        (self.kind(), config.expect("config serializes"), prov, tensors)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let (kind, config, provenance, mut tensors) = self.parts();
        let meta_shape;
        if let Checkpoint::Teacher(t) = self {
            t.validate()?;
            meta_shape = [t.meta_mean.len()];
            tensors.push((META_MEAN, &meta_shape, &t.meta_mean));
            tensors.push((META_VAR, &meta_shape, &t.meta_var));
        }
        let header = CheckpointHeader {
            kind,
            config,
            provenance: provenance.clone(),
            tensors: tensors
                .iter()
                .map(|(n, s, _)| TensorEntry {
                    name: n.to_string(),
                    shape: s.to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, _, data) in tensors {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let header = read_header(r)?;
        let mut named = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            let data = read_f64s(r, n).map_err(|_| {
                Error::Format(format!("truncated payload for tensor `{}`", entry.name))
            })?;
            named.push((entry.name.clone(), Tensor::new(&entry.shape, data)?));
        }
        let take = |named: &mut Vec<(String, Tensor)>, name: &str| {
            named
                .iter()
                .position(|(n, _)| n == name)
                .map(|i| named.swap_remove(i).1.into_data())
        };
        let bad_config = |e: serde_json::Error| Error::Format(format!("bad config in header: {e}"));
        Ok(match header.kind {
            ModelKind::Teacher | ModelKind::Student => {
                let config: SeqModelConfig =
                    serde_json::from_value(header.config.clone()).map_err(bad_config)?;
                config.validate()?;
                let mean = take(&mut named, META_MEAN);
                let var = take(&mut named, META_VAR);
                let model = SeqModel {
                    params: SeqModelParams::from_named(&config, named)?,
                    config,
                };
                match (header.kind, mean, var) {
                    (ModelKind::Teacher, Some(meta_mean), Some(meta_var)) => {
                        let t = TeacherCheckpoint {
                            model,
                            meta_mean,
                            meta_var,
                            provenance: header.provenance,
                        };
                        t.validate()?;
                        Checkpoint::Teacher(t)
                    }
                    (ModelKind::Teacher, _, _) => return Err(Error::MetadataMissing),
                    _ => Checkpoint::Student(StudentCheckpoint {
                        model,
                        provenance: header.provenance,
                    }),
                }
            }
            ModelKind::Generator => {
                let config: GeneratorConfig =
                    serde_json::from_value(header.config.clone()).map_err(bad_config)?;
                config.validate()?;
                Checkpoint::Generator(GeneratorCheckpoint {
                    generator: Generator {
                        params: GeneratorParams::from_named(&config, named)?,
                        config,
                    },
                    provenance: header.provenance,
                })
            }
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

/// Loads a checkpoint that must be a teacher carrying metadata.
pub fn load_teacher(path: impl AsRef<Path>) -> Result<TeacherCheckpoint> {
    Checkpoint::load(path)?.into_teacher()
}

/// Reads only the JSON header of a checkpoint file.
pub fn read_checkpoint_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_header(&mut f)
}

fn read_header(r: &mut impl Read) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for checkpoint magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic bytes)".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| Error::Format("truncated version field".into()))?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("truncated header length".into()))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("truncated header".into()))?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad header JSON: {e}")))
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
