use rand::Rng;
use rand_distr::StandardNormal;

use super::config::GeneratorConfig;
use super::params::{init_affine, rng_for, ParamSet};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Two-layer fully connected generator: noise -> relu hidden -> tanh frames.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl GeneratorParams {
    pub fn init(config: &GeneratorConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed);
        let (w1, b1) = init_affine(&mut rng, config.noise_dim, config.hidden_dim);
        let (w2, b2) = init_affine(&mut rng, config.hidden_dim, config.output_len());
        GeneratorParams { w1, b1, w2, b2 }
    }

    pub fn zeros(config: &GeneratorConfig) -> Self {
        GeneratorParams {
            w1: Tensor::zeros(&[config.noise_dim, config.hidden_dim]),
            b1: Tensor::zeros(&[config.hidden_dim]),
            w2: Tensor::zeros(&[config.hidden_dim, config.output_len()]),
            b2: Tensor::zeros(&[config.output_len()]),
        }
    }

    pub(crate) fn from_named(config: &GeneratorConfig, mut named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut out = Self::zeros(config);
        for (name, slot) in out.params_mut() {
            let pos = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
            let (_, t) = named.swap_remove(pos);
            if t.shape() != slot.shape() {
                return Err(Error::shape("load parameter", slot.shape(), t.shape()));
            }
            *slot = t;
        }
        Ok(out)
    }
}

impl ParamSet for GeneratorParams {
    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("gen.w1", &self.w1), ("gen.b1", &self.b1), ("gen.w2", &self.w2), ("gen.b2", &self.b2)]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("gen.w1", &mut self.w1),
            ("gen.b1", &mut self.b1),
            ("gen.w2", &mut self.w2),
            ("gen.b2", &mut self.b2),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: GeneratorParams,
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// B×(L+V)×D, last V steps zero.
    pub samples: Var,
    pub param_vars: Vec<Var>,
}

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Generator {
            params: GeneratorParams::init(&config, seed),
            config,
        })
    }

    pub fn forward(&self, g: &mut Graph, noise: Var, trainable: bool) -> Result<GeneratorOutput> {
        let c = &self.config;
        let sn = g.shape(noise).to_vec();
        if sn.len() != 2 || sn[1] != c.noise_dim {
            return Err(Error::shape("generator_forward", &sn, &[0, c.noise_dim]));
        }
        let batch = sn[0];
        let vars = self.params.bind(g, trainable);
        let [w1, b1, w2, b2] = vars[..] else {
            unreachable!("four generator parameters")
        };
        let hidden = g.matmul(noise, w1)?;
        let hidden = g.add_row(hidden, b1)?;
        let hidden = g.relu(hidden);
        let out = g.matmul(hidden, w2)?;
        let out = g.add_row(out, b2)?;
        let out = g.tanh(out);
        let frames = g.reshape(out, &[batch, c.obs_len, c.feature_dim])?;
        let samples = g.pad_steps(frames, c.horizon)?;
        Ok(GeneratorOutput {
            samples,
            param_vars: vars,
        })
    }

    /// Standard-normal noise batch B×noise_dim.
    pub fn sample_noise(&self, rng: &mut impl Rng, batch: usize) -> Tensor {
        let n = batch * self.config.noise_dim;
        let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Tensor::new(&[batch, self.config.noise_dim], data).expect("shape")
    }

    /// Generates a flat batch of synthetic sequences outside any training graph.
    pub fn generate(&self, noise: Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let n = g.constant(noise);
        let out = self.forward(&mut g, n, false)?;
        Ok(g.data(out.samples).to_vec())
    }
}
