use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a GRU sequence model (teacher or student).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_beams: usize,
    pub obs_len: usize,
    pub horizon: usize,
}

impl SeqModelConfig {
    pub const TEACHER_HIDDEN: usize = 128;
    pub const STUDENT_HIDDEN: usize = 32;

    pub fn teacher(input_dim: usize) -> Self {
        SeqModelConfig {
            input_dim,
            hidden_dim: Self::TEACHER_HIDDEN,
            num_beams: 64,
            obs_len: 8,
            horizon: 3,
        }
    }

    pub fn student(input_dim: usize) -> Self {
        SeqModelConfig {
            hidden_dim: Self::STUDENT_HIDDEN,
            ..Self::teacher(input_dim)
        }
    }

    pub fn with_hidden(self, hidden_dim: usize) -> Self {
        SeqModelConfig { hidden_dim, ..self }
    }

    /// Unrolled length: observed frames plus zero-padded future frames.
    pub fn seq_len(&self) -> usize {
        self.obs_len + self.horizon
    }

    /// Number of prediction heads (current slot plus `horizon` future slots).
    pub fn num_heads(&self) -> usize {
        self.horizon + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_beams == 0 || self.obs_len == 0 {
            return Err(Error::Parameter(format!(
                "sequence model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Parameter count of the GRU plus head.
    pub fn num_params(&self) -> usize {
        let (d, h, m) = (self.input_dim, self.hidden_dim, self.num_beams);
        3 * ((d + h) * h + h) + h * m + m
    }
}

impl Default for SeqModelConfig {
    fn default() -> Self {
        Self::teacher(32)
    }
}

/// Shape of the noise-to-sequence generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub noise_dim: usize,
    pub hidden_dim: usize,
    pub obs_len: usize,
    pub feature_dim: usize,
    pub horizon: usize,
}

impl GeneratorConfig {
    /// Generator matching the input format of `model`.
    pub fn for_model(model: &SeqModelConfig) -> Self {
        GeneratorConfig {
            obs_len: model.obs_len,
            feature_dim: model.input_dim,
            horizon: model.horizon,
            ..Self::default()
        }
    }

    pub fn output_len(&self) -> usize {
        self.obs_len * self.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.hidden_dim == 0 || self.obs_len == 0 || self.feature_dim == 0 {
            return Err(Error::Parameter(format!(
                "generator dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn check_compatible(&self, model: &SeqModelConfig) -> Result<()> {
        if self.obs_len != model.obs_len
            || self.feature_dim != model.input_dim
            || self.horizon != model.horizon
        {
            return Err(Error::ConfigMismatch(format!(
                "generator emits {}x{} (+{} padding) but model expects {}x{} (+{})",
                self.obs_len, self.feature_dim, self.horizon, model.obs_len, model.input_dim, model.horizon
            )));
        }
        Ok(())
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            noise_dim: 500,
            hidden_dim: 64,
            obs_len: 8,
            feature_dim: 32,
            horizon: 3,
        }
    }
}
