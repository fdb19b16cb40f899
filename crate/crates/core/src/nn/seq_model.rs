use super::config::SeqModelConfig;
use super::params::{init_affine, rng_for, ParamSet};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Single-layer GRU with one affine head shared across horizon offsets.
///
/// Each gate maps the concatenation `[x; h]` (width D+H) to H units:
///
/// ```text
/// z  = sigmoid([x; h] W_z + b_z)
/// r  = sigmoid([x; h] W_r + b_r)
/// h~ = tanh([x; r*h] W_h + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SeqModelParams {
    pub w_update: Tensor,
    pub b_update: Tensor,
    pub w_reset: Tensor,
    pub b_reset: Tensor,
    pub w_candidate: Tensor,
    pub b_candidate: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl SeqModelParams {
    pub fn init(config: &SeqModelConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed);
        let (d, h, m) = (config.input_dim, config.hidden_dim, config.num_beams);
        let (w_update, b_update) = init_affine(&mut rng, d + h, h);
        let (w_reset, b_reset) = init_affine(&mut rng, d + h, h);
        let (w_candidate, b_candidate) = init_affine(&mut rng, d + h, h);
        let (head_w, head_b) = init_affine(&mut rng, h, m);
        SeqModelParams {
            w_update,
            b_update,
            w_reset,
            b_reset,
            w_candidate,
            b_candidate,
            head_w,
            head_b,
        }
    }

    pub fn zeros(config: &SeqModelConfig) -> Self {
        let (d, h, m) = (config.input_dim, config.hidden_dim, config.num_beams);
        SeqModelParams {
            w_update: Tensor::zeros(&[d + h, h]),
            b_update: Tensor::zeros(&[h]),
            w_reset: Tensor::zeros(&[d + h, h]),
            b_reset: Tensor::zeros(&[h]),
            w_candidate: Tensor::zeros(&[d + h, h]),
            b_candidate: Tensor::zeros(&[h]),
            head_w: Tensor::zeros(&[h, m]),
            head_b: Tensor::zeros(&[m]),
        }
    }

    /// Expected shape of every parameter, in `params()` order.
    pub fn expected_shapes(config: &SeqModelConfig) -> Vec<(&'static str, Vec<usize>)> {
        Self::zeros(config)
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }

    pub(crate) fn from_named(config: &SeqModelConfig, mut named: Vec<(String, Tensor)>) -> Result<Self> {
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

impl ParamSet for SeqModelParams {
    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("gru.w_update", &self.w_update),
            ("gru.b_update", &self.b_update),
            ("gru.w_reset", &self.w_reset),
            ("gru.b_reset", &self.b_reset),
            ("gru.w_candidate", &self.w_candidate),
            ("gru.b_candidate", &self.b_candidate),
            ("head.w", &self.head_w),
            ("head.b", &self.head_b),
        ]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("gru.w_update", &mut self.w_update),
            ("gru.b_update", &mut self.b_update),
            ("gru.w_reset", &mut self.w_reset),
            ("gru.b_reset", &mut self.b_reset),
            ("gru.w_candidate", &mut self.w_candidate),
            ("gru.b_candidate", &mut self.b_candidate),
            ("head.w", &mut self.head_w),
            ("head.b", &mut self.head_b),
        ]
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct SeqOutput {
    /// B×(V+1)×M
    pub logits: Var,
    /// B×H state after the final unroll step.
    pub last_hidden: Var,
    /// Parameter leaves, in `params()` order.
    pub param_vars: Vec<Var>,
}

/// A sequence model: configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel {
    pub config: SeqModelConfig,
    pub params: SeqModelParams,
}

impl SeqModel {
    pub fn new(config: SeqModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(SeqModel {
            params: SeqModelParams::init(&config, seed),
            config,
        })
    }

    /// Unrolls the GRU over all L+V steps of `x` (B×(L+V)×D).
    ///
    /// Logits for offset v are read from the state after step L-1+v.
    /// With `trainable = false` the parameters enter the graph as constants,
    /// but gradients still flow to `x` if it requires them.
    pub fn forward(&self, g: &mut Graph, x: Var, trainable: bool) -> Result<SeqOutput> {
        let c = &self.config;
        let sx = g.shape(x).to_vec();
        if sx.len() != 3 || sx[1] != c.seq_len() || sx[2] != c.input_dim {
            return Err(Error::shape(
                "seq_forward",
                &sx,
                &[sx.first().copied().unwrap_or(0), c.seq_len(), c.input_dim],
            ));
        }
        let batch = sx[0];
        let vars = self.params.bind(g, trainable);
        let [wz, bz, wr, br, wh, bh, hw, hb] = vars[..] else {
            unreachable!("eight GRU parameters")
        };
        let mut h = g.constant(Tensor::zeros(&[batch, c.hidden_dim]));
        let mut heads = Vec::with_capacity(c.num_heads());
        for t in 0..c.seq_len() {
            let xt = g.step(x, t)?;
            let xh = g.concat_cols(xt, h)?;
            let z = g.matmul(xh, wz)?;
            let z = g.add_row(z, bz)?;
            let z = g.sigmoid(z);
            let r = g.matmul(xh, wr)?;
            let r = g.add_row(r, br)?;
            let r = g.sigmoid(r);
            let rh = g.mul(r, h)?;
            let xrh = g.concat_cols(xt, rh)?;
            let cand = g.matmul(xrh, wh)?;
            let cand = g.add_row(cand, bh)?;
            let cand = g.tanh(cand);
            let delta = g.sub(cand, h)?;
            let step = g.mul(z, delta)?;
            h = g.add(h, step)?;
            if t + 1 >= c.obs_len {
                let o = g.matmul(h, hw)?;
                heads.push(g.add_row(o, hb)?);
            }
        }
        let logits = g.stack_steps(&heads)?;
        Ok(SeqOutput {
            logits,
            last_hidden: h,
            param_vars: vars,
        })
    }

    /// Inference: returns flat B×(V+1)×M logits and B×H last hidden states.
    pub fn infer(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = &self.config;
        let t = Tensor::new(&[batch, c.seq_len(), c.input_dim], x.to_vec())?;
        let mut g = Graph::new();
        let xv = g.constant(t);
        let out = self.forward(&mut g, xv, false)?;
        Ok((g.data(out.logits).to_vec(), g.data(out.last_hidden).to_vec()))
    }
}
