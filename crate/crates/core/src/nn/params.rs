use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Tensor, Var};

/// A named, ordered collection of parameter tensors.
pub trait ParamSet {
    fn params(&self) -> Vec<(&'static str, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_grads(&mut self) {
        for (_, t) in self.params_mut() {
            t.grad = None;
        }
    }

    /// SHA-256 over names, shapes and raw bits of every parameter.
    fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.params() {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, t)| t.is_finite())
    }

    /// Enters every parameter into `g` as a leaf, in `params()` order.
    fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|(_, t)| {
                let mut leaf = t.clone();
                leaf.grad = None;
                leaf.requires_grad = trainable;
                g.leaf(leaf)
            })
            .collect()
    }

    /// Copies gradients from `g` for the leaves returned by [`ParamSet::bind`].
    fn pull_grads(&mut self, g: &Graph, vars: &[Var]) {
        for ((_, t), v) in self.params_mut().into_iter().zip(vars) {
            t.grad = g.grad(*v).map(<[f64]>::to_vec);
        }
    }
}

/// Weight matrix `fan_in × fan_out` and bias `fan_out`, both uniform in
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn init_affine(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> (Tensor, Tensor) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
    let w = Tensor::new(&[fan_in, fan_out], draw(fan_in * fan_out)).expect("shape");
    let b = Tensor::new(&[fan_out], draw(fan_out)).expect("shape");
    (w, b)
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
