//! Beam ranking and Top-K accuracy per horizon offset.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::SeqModel;
use crate::scenario::{Dataset, LidarSequence, Split};

/// Anything that maps a batch of sequences to B×(V+1)×M logits.
pub trait BeamPredictor: Sync {
    fn num_beams(&self) -> usize;
    fn num_heads(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn seq_len(&self) -> usize;
    fn logits(&self, x: &[f64], batch: usize) -> Result<Vec<f64>>;
}

impl BeamPredictor for SeqModel {
    fn num_beams(&self) -> usize {
        self.config.num_beams
    }

    fn num_heads(&self) -> usize {
        self.config.num_heads()
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn seq_len(&self) -> usize {
        self.config.seq_len()
    }

    fn logits(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.infer(x, batch)?.0)
    }
}

/// Fails unless `model` consumes and predicts exactly what `ds` holds.
pub fn check_compatible(model: &impl BeamPredictor, ds: &Dataset) -> Result<()> {
    let c = &ds.config;
    let want = (c.array.num_beams, c.horizon + 1, c.feature_dim, c.seq_len());
    let have = (model.num_beams(), model.num_heads(), model.input_dim(), model.seq_len());
    if want != have {
        return Err(Error::ConfigMismatch(format!(
            "model (beams, heads, features, seq_len) = {have:?} but dataset has {want:?}"
        )));
    }
    Ok(())
}

/// Indices of the `k` largest entries, descending; ties go to the smaller index.
pub fn rank_top_k(logits: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > logits.len() {
        return Err(Error::Parameter(format!("K must be in [1, {}], got {k}", logits.len())));
    }
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Ranked top-K beams for every horizon offset of one sequence.
pub fn predict_beams(model: &impl BeamPredictor, x: &LidarSequence, k: usize) -> Result<Vec<Vec<usize>>> {
    let logits = model.logits(x.frames(), 1)?;
    logits
        .chunks(model.num_beams())
        .map(|row| rank_top_k(row, k))
        .collect()
}

const EVAL_CHUNK: usize = 256;

/// Logits for the given samples, computed in parallel chunks and
/// reassembled in input order.
pub fn batch_logits(model: &impl BeamPredictor, ds: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let (x, _) = ds.batch(chunk);
            model.logits(&x, chunk.len())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

fn split_or_err(ds: &Dataset, split: Split) -> Result<Vec<usize>> {
    let idx = ds.split_indices(split);
    if idx.is_empty() {
        return Err(Error::Contract(format!("{split} split is empty")));
    }
    Ok(idx)
}

fn rank_of(row: &[f64], label: usize) -> usize {
    let target = row[label];
    row.iter()
        .enumerate()
        .filter(|&(i, &v)| v > target || (v == target && i < label))
        .count()
}

/// Fraction of samples whose true beam is among the top `k`, per offset.
pub fn topk_accuracy(model: &impl BeamPredictor, ds: &Dataset, split: Split, k: usize) -> Result<Vec<f64>> {
    check_compatible(model, ds)?;
    let m = model.num_beams();
    if k == 0 || k > m {
        return Err(Error::Parameter(format!("K must be in [1, {m}], got {k}")));
    }
    let idx = split_or_err(ds, split)?;
    let logits = batch_logits(model, ds, &idx)?;
    Ok(accuracy_from_logits(&logits, ds, &idx, m, k))
}

pub(crate) fn accuracy_from_logits(logits: &[f64], ds: &Dataset, idx: &[usize], m: usize, k: usize) -> Vec<f64> {
    let heads = ds.num_heads();
    let mut hits = vec![0usize; heads];
    for (row_block, &i) in logits.chunks(heads * m).zip(idx) {
        for (v, row) in row_block.chunks(m).enumerate() {
            if rank_of(row, ds.samples[i].labels.0[v]) < k {
                hits[v] += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / idx.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub true_beam: usize,
    pub predicted: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetMetrics {
    pub offset: usize,
    pub top1: f64,
    pub top5: f64,
    /// Most frequent (true, top-1 predicted) pairs among errors.
    pub top_confusions: Vec<ConfusionPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub split: Split,
    pub config_hash: String,
    pub num_samples: usize,
    pub offsets: Vec<OffsetMetrics>,
}

impl EvalReport {
    pub fn mean_top1(&self) -> f64 {
        self.offsets.iter().map(|o| o.top1).sum::<f64>() / self.offsets.len() as f64
    }

    pub fn mean_top5(&self) -> f64 {
        self.offsets.iter().map(|o| o.top5).sum::<f64>() / self.offsets.len() as f64
    }
}

const CONFUSIONS_KEPT: usize = 5;

/// Top-1 and Top-5 accuracy plus confusion summaries for every offset.
pub fn evaluate(model: &impl BeamPredictor, name: &str, ds: &Dataset, split: Split) -> Result<EvalReport> {
    check_compatible(model, ds)?;
    let m = model.num_beams();
    let heads = model.num_heads();
    let idx = split_or_err(ds, split)?;
    let logits = batch_logits(model, ds, &idx)?;
    let top1 = accuracy_from_logits(&logits, ds, &idx, m, 1);
    let top5 = accuracy_from_logits(&logits, ds, &idx, m, 5.min(m));
    let mut confusions: Vec<BTreeMap<(usize, usize), usize>> = vec![BTreeMap::new(); heads];
    for (row_block, &i) in logits.chunks(heads * m).zip(&idx) {
        for (v, row) in row_block.chunks(m).enumerate() {
            let pred = rank_top_k(row, 1)?[0];
            let truth = ds.samples[i].labels.0[v];
            if pred != truth {
                *confusions[v].entry((truth, pred)).or_default() += 1;
            }
        }
    }
    let offsets = (0..heads)
        .map(|v| {
            let mut pairs: Vec<ConfusionPair> = confusions[v]
                .iter()
                .map(|(&(t, p), &count)| ConfusionPair {
                    true_beam: t,
                    predicted: p,
                    count,
                })
                .collect();
            pairs.sort_by(|a, b| b.count.cmp(&a.count).then((a.true_beam, a.predicted).cmp(&(b.true_beam, b.predicted))));
            pairs.truncate(CONFUSIONS_KEPT);
            OffsetMetrics {
                offset: v,
                top1: top1[v],
                top5: top5[v],
                top_confusions: pairs,
            }
        })
        .collect();
    Ok(EvalReport {
        model: name.to_string(),
        split,
        config_hash: ds.config_hash.clone(),
        num_samples: idx.len(),
        offsets,
    })
}
