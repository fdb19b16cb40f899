use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are allocated on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Self::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using the `grad` stored on every parameter.
    pub fn step(&mut self, params: &mut impl ParamSet) -> Result<()> {
        let mut named = params.params_mut();
        for (name, t) in &named {
            match &t.grad {
                None => return Err(Error::MissingGradient((*name).to_string())),
                Some(g) if g.len() != t.len() => {
                    return Err(Error::shape("adam gradient", &[t.len()], &[g.len()]))
                }
                _ => {}
            }
        }
        if self.first.is_empty() {
            self.first = named.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != named.len()
            || self.first.iter().zip(&named).any(|(m, (_, t))| m.len() != t.len())
        {
            return Err(Error::Contract("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((m, v), (_, t)) in self.first.iter_mut().zip(&mut self.second).zip(named.iter_mut()) {
            let grad = t.grad.take().expect("checked above");
            for (((w, g), mi), vi) in t.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
            t.grad = Some(grad);
        }
        Ok(())
    }
}
