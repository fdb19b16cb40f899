//! Generator inversion losses and student distillation losses.
//!
//! Every function appends to a [`Graph`] and returns a scalar [`Var`].
//! Logits are B×(V+1)×M (a 2-D B×M tensor counts as a single head); every
//! loss is averaged uniformly over the V+1 heads. Teacher logits passed to
//! student losses are detached, so gradients reach the student only.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_values, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLossWeights {
    /// Weight of the activation term.
    pub alpha: f64,
    /// Weight of the entropy term.
    pub beta: f64,
}

impl Default for GeneratorLossWeights {
    fn default() -> Self {
        GeneratorLossWeights {
            alpha: 1e-4,
            beta: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLossKind {
    Weighted,
    MetadataOnly,
    ActivationOnly,
    EntropyOnly,
}

impl FromStr for GeneratorLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Self::Weighted),
            "metadata_only" => Ok(Self::MetadataOnly),
            "activation_only" => Ok(Self::ActivationOnly),
            "entropy_only" => Ok(Self::EntropyOnly),
            other => Err(Error::Parameter(format!("unknown generator loss kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentLossKind {
    Kl,
    Mse,
}

impl FromStr for StudentLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Self::Kl),
            "mse" => Ok(Self::Mse),
            other => Err(Error::Parameter(format!("unknown student loss kind `{other}`"))),
        }
    }
}

/// Loss selection and hyperparameters for generator and student training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdConfig {
    /// Softmax temperature; required by KL-based losses, unused by MSE.
    pub temperature: Option<f64>,
    /// Weight of the soft term in standard KD.
    pub gamma: f64,
    pub student_loss: StudentLossKind,
    pub generator_loss: GeneratorLossKind,
    pub weights: GeneratorLossWeights,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            temperature: None,
            gamma: 0.7,
            student_loss: StudentLossKind::Mse,
            generator_loss: GeneratorLossKind::MetadataOnly,
            weights: GeneratorLossWeights::default(),
        }
    }
}

impl KdConfig {
    pub const DEFAULT_TEMPERATURE: f64 = 5.0;

    pub fn kl(temperature: f64) -> Self {
        KdConfig {
            temperature: Some(temperature),
            student_loss: StudentLossKind::Kl,
            ..Default::default()
        }
    }

    pub fn mse() -> Self {
        KdConfig {
            student_loss: StudentLossKind::Mse,
            ..Default::default()
        }
    }

    pub fn with_generator_loss(self, kind: GeneratorLossKind) -> Self {
        KdConfig {
            generator_loss: kind,
            ..self
        }
    }

    /// Checks the combination and returns any non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if self.weights.alpha < 0.0 || self.weights.beta < 0.0 {
            return Err(Error::Parameter("generator loss weights must be >= 0".into()));
        }
        match (self.student_loss, self.temperature) {
            (StudentLossKind::Kl, None) => {
                return Err(Error::Parameter("KL student loss needs a temperature".into()))
            }
            (_, Some(t)) if !(t > 0.0) => {
                return Err(Error::Parameter(format!("temperature must be positive, got {t}")))
            }
            (StudentLossKind::Mse, Some(t)) => {
                warnings.push(format!("temperature {t} ignored by the MSE student loss"))
            }
            _ => {}
        }
        Ok(warnings)
    }

    /// Temperature for KL terms, failing if none was configured.
    pub fn require_temperature(&self) -> Result<f64> {
        self.temperature
            .ok_or_else(|| Error::Parameter("KL loss needs a temperature".into()))
    }
}

fn head_rows(g: &Graph, logits: Var) -> Result<(usize, usize)> {
    let s = g.shape(logits);
    match s.len() {
        2 => Ok((s[0], 1)),
        3 => Ok((s[0], s[1])),
        _ => Err(Error::shape("logits", s, &[0, 0, 0])),
    }
}

fn mse_to_constant(g: &mut Graph, estimate: Var, target: &[f64]) -> Result<Var> {
    let t = g.constant(Tensor::from_vec(target.to_vec()));
    let diff = g.sub(estimate, t)?;
    let sq = g.square(diff);
    Ok(g.mean(sq))
}

/// `MSE(mu, mu_hat) + MSE(var, var_hat)` where the hats are batch moments of `feat`.
pub fn metadata_loss(g: &mut Graph, feat: Var, mean: &[f64], var: &[f64]) -> Result<Var> {
    let s = g.shape(feat);
    if s.len() != 2 || s[1] != mean.len() || s[1] != var.len() {
        return Err(Error::shape("metadata_loss", s, &[mean.len(), var.len()]));
    }
    if s[0] < 2 {
        return Err(Error::Parameter(format!("metadata loss needs a batch of at least 2, got {}", s[0])));
    }
    let (mu_hat, var_hat) = g.moments(feat)?;
    let a = mse_to_constant(g, mu_hat, mean)?;
    let b = mse_to_constant(g, var_hat, var)?;
    g.add(a, b)
}

/// Negative mean per-sample L2 norm of `feat` (B×H).
pub fn activation_loss(g: &mut Graph, feat: Var) -> Result<Var> {
    let norms = g.row_norm(feat)?;
    let m = g.mean(norms);
    Ok(g.scale(m, -1.0))
}

/// Mean Shannon entropy (nats) of `softmax(logits)` over batch and heads.
pub fn entropy_loss(g: &mut Graph, logits: Var) -> Result<Var> {
    let (b, heads) = head_rows(g, logits)?;
    let logp = g.log_softmax(logits, 1.0)?;
    let p = g.exp(logp);
    let plogp = g.mul(p, logp)?;
    let s = g.sum(plogp);
    Ok(g.scale(s, -1.0 / (b * heads) as f64))
}

/// Generator loss plus the value of each term for logging.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorLoss {
    pub total: Var,
    pub metadata: f64,
    pub activation: f64,
    pub entropy: f64,
}

/// `weighted`: metadata + alpha*activation + beta*entropy. The `_only`
/// kinds return that single term; the others are still computed for
/// logging but are not connected to `total`.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss(
    g: &mut Graph,
    kind: GeneratorLossKind,
    weights: GeneratorLossWeights,
    feat: Var,
    logits: Var,
    mean: &[f64],
    var: &[f64],
) -> Result<GeneratorLoss> {
    let meta = metadata_loss(g, feat, mean, var)?;
    let act = activation_loss(g, feat)?;
    let ent = entropy_loss(g, logits)?;
    let total = match kind {
        GeneratorLossKind::Weighted => {
            let a = g.scale(act, weights.alpha);
            let e = g.scale(ent, weights.beta);
            let me = g.add(meta, a)?;
            g.add(me, e)?
        }
        GeneratorLossKind::MetadataOnly => meta,
        GeneratorLossKind::ActivationOnly => act,
        GeneratorLossKind::EntropyOnly => ent,
    };
    Ok(GeneratorLoss {
        total,
        metadata: g.item(meta)?,
        activation: g.item(act)?,
        entropy: g.item(ent)?,
    })
}

fn check_same(g: &Graph, a: Var, b: Var, op: &'static str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::shape(op, g.shape(a), g.shape(b)));
    }
    Ok(())
}

/// Temperature-softened KL(teacher || student), scaled by T^2/B per head.
pub fn kl_loss(g: &mut Graph, teacher_logits: Var, student_logits: Var, temperature: f64) -> Result<Var> {
    check_same(g, teacher_logits, student_logits, "kl_loss")?;
    let (b, heads) = head_rows(g, student_logits)?;
    let m = *g.shape(student_logits).last().expect("checked rank");
    let p = softmax_values(g.data(teacher_logits), m, temperature)?;
    let plogp: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum();
    let p_var = g.constant(Tensor::new(g.shape(student_logits), p)?);
    let logq = g.log_softmax(student_logits, temperature)?;
    let cross = g.mul(p_var, logq)?;
    let s = g.sum(cross);
    let k = temperature * temperature / (b * heads) as f64;
    let neg = g.scale(s, -k);
    Ok(g.add_scalar(neg, k * plogp))
}

/// Mean squared difference of raw logits, teacher detached.
pub fn mse_logit_loss(g: &mut Graph, teacher_logits: Var, student_logits: Var) -> Result<Var> {
    check_same(g, teacher_logits, student_logits, "mse_logit_loss")?;
    let t = g.detach(teacher_logits);
    let d = g.sub(student_logits, t)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Mean negative log-likelihood of the true beam, over batch and heads.
/// `labels` holds B×(V+1) indices in row-major order.
pub fn cross_entropy_loss(g: &mut Graph, student_logits: Var, labels: &[usize]) -> Result<Var> {
    head_rows(g, student_logits)?;
    let logq = g.log_softmax(student_logits, 1.0)?;
    let picked = g.gather(logq, labels)?;
    let m = g.mean(picked);
    Ok(g.scale(m, -1.0))
}

fn convex(g: &mut Graph, gamma: f64, soft: Var, hard: Var) -> Result<Var> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("gamma must be in [0, 1], got {gamma}")));
    }
    let a = g.scale(soft, gamma);
    let b = g.scale(hard, 1.0 - gamma);
    g.add(a, b)
}

/// `gamma * KL + (1 - gamma) * CE`.
pub fn kd_loss(
    g: &mut Graph,
    teacher_logits: Var,
    student_logits: Var,
    labels: &[usize],
    gamma: f64,
    temperature: f64,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("gamma must be in [0, 1], got {gamma}")));
    }
    let kl = kl_loss(g, teacher_logits, student_logits, temperature)?;
    let ce = cross_entropy_loss(g, student_logits, labels)?;
    convex(g, gamma, kl, ce)
}

/// `gamma * MSE(logits) + (1 - gamma) * CE`.
pub fn kd_mse_loss(
    g: &mut Graph,
    teacher_logits: Var,
    student_logits: Var,
    labels: &[usize],
    gamma: f64,
) -> Result<Var> {
    let mse = mse_logit_loss(g, teacher_logits, student_logits)?;
    let ce = cross_entropy_loss(g, student_logits, labels)?;
    convex(g, gamma, mse, ce)
}
