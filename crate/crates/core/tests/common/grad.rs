//! Finite-difference checks of every differentiable op and of the full
//! model/loss composites.

use dfkd_beam::autodiff::gradcheck::{max_relative_error, numeric_gradient};
use dfkd_beam::autodiff::{Graph, Tensor, Var};
use dfkd_beam::losses::{self, GeneratorLossKind, GeneratorLossWeights};
use dfkd_beam::nn::{Generator, GeneratorConfig, ParamSet, SeqModel, SeqModelConfig};
use dfkd_beam::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Relative errors are taken against max(|analytic|, |numeric|, FLOOR).
pub const FLOOR: f64 = 1e-6;

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so kinks (relu) and small denominators are
/// not straddled by a finite-difference step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

type Build = fn(&mut Graph, &[Var]) -> Result<Var>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    pub build: Build,
    /// Leading inputs that must receive no gradient (detached teachers).
    pub frozen: usize,
}

/// Evaluates `build` and contracts a non-scalar result with fixed weights.
fn scalar_loss(build: Build, inputs: &[Tensor], weights_seed: u64, g: &mut Graph, leaves: bool) -> Result<(Var, Vec<Var>)> {
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| if leaves { g.leaf(t.clone().with_grad()) } else { g.constant(t.clone()) })
        .collect();
    let out = build(g, &vars)?;
    if g.shape(out).is_empty() {
        return Ok((out, vars));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(weights_seed);
    let w = uniform(&mut rng, g.shape(out), -1.0, 1.0);
    let wv = g.constant(w);
    let prod = g.mul(out, wv)?;
    Ok((g.sum(prod), vars))
}

/// Largest relative error over all inputs of one case at one seed.
pub fn check_op(case: &OpCase, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (case.inputs)(&mut rng);
    let mut g = Graph::new();
    let (loss, vars) = scalar_loss(case.build, &inputs, seed ^ 0xabcd, &mut g, true)?;
    g.backward(loss)?;
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; inputs[i].len()]);
        if i < case.frozen {
            worst = worst.max(analytic.iter().fold(0.0, |a, x| a.max(x.abs() / FLOOR)));
            continue;
        }
        let f = |x: &[f64]| {
            let mut probe = inputs.clone();
            probe[i] = Tensor::new(inputs[i].shape(), x.to_vec()).unwrap();
            let mut g = Graph::new();
            let (l, _) = scalar_loss(case.build, &probe, seed ^ 0xabcd, &mut g, false).unwrap();
            g.item(l).unwrap()
        };
        let numeric = numeric_gradient(f, inputs[i].data(), STEP);
        worst = worst.max(max_relative_error(&analytic, &numeric, FLOOR));
    }
    Ok(worst)
}

fn rand_of(shape: &'static [usize]) -> impl Fn(&mut ChaCha8Rng) -> Tensor {
    move |r| uniform(r, shape, -1.5, 1.5)
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase { name: "matmul", inputs: |r| vec![rand_of(&[3, 4])(r), rand_of(&[4, 5])(r)], build: |g, v| g.matmul(v[0], v[1]), frozen: 0 },
        OpCase { name: "add", inputs: |r| vec![rand_of(&[3, 4])(r), rand_of(&[3, 4])(r)], build: |g, v| g.add(v[0], v[1]), frozen: 0 },
        OpCase { name: "add_scalar_broadcast", inputs: |r| vec![rand_of(&[3, 4])(r), rand_of(&[])(r)], build: |g, v| g.add(v[0], v[1]), frozen: 0 },
        OpCase { name: "sub", inputs: |r| vec![rand_of(&[2, 5])(r), rand_of(&[2, 5])(r)], build: |g, v| g.sub(v[0], v[1]), frozen: 0 },
        OpCase { name: "mul", inputs: |r| vec![rand_of(&[2, 3, 2])(r), rand_of(&[2, 3, 2])(r)], build: |g, v| g.mul(v[0], v[1]), frozen: 0 },
        OpCase { name: "add_row", inputs: |r| vec![rand_of(&[4, 3])(r), rand_of(&[3])(r)], build: |g, v| g.add_row(v[0], v[1]), frozen: 0 },
        OpCase { name: "scale", inputs: |r| vec![rand_of(&[5])(r)], build: |g, v| Ok(g.scale(v[0], -2.5)), frozen: 0 },
        OpCase { name: "add_scalar", inputs: |r| vec![rand_of(&[5])(r)], build: |g, v| Ok(g.add_scalar(v[0], 0.7)), frozen: 0 },
        OpCase { name: "relu", inputs: |r| vec![away_from_zero(r, &[4, 4])], build: |g, v| Ok(g.relu(v[0])), frozen: 0 },
        OpCase { name: "tanh", inputs: |r| vec![rand_of(&[4, 4])(r)], build: |g, v| Ok(g.tanh(v[0])), frozen: 0 },
        OpCase { name: "sigmoid", inputs: |r| vec![rand_of(&[4, 4])(r)], build: |g, v| Ok(g.sigmoid(v[0])), frozen: 0 },
        OpCase { name: "square", inputs: |r| vec![rand_of(&[6])(r)], build: |g, v| Ok(g.square(v[0])), frozen: 0 },
        OpCase { name: "exp", inputs: |r| vec![rand_of(&[6])(r)], build: |g, v| Ok(g.exp(v[0])), frozen: 0 },
        OpCase { name: "softmax_t1", inputs: |r| vec![rand_of(&[3, 5])(r)], build: |g, v| g.softmax(v[0], 1.0), frozen: 0 },
        OpCase { name: "softmax_t4", inputs: |r| vec![rand_of(&[2, 2, 6])(r)], build: |g, v| g.softmax(v[0], 4.0), frozen: 0 },
        OpCase { name: "log_softmax", inputs: |r| vec![rand_of(&[3, 5])(r)], build: |g, v| g.log_softmax(v[0], 2.0), frozen: 0 },
        OpCase { name: "sum", inputs: |r| vec![rand_of(&[3, 3])(r)], build: |g, v| Ok(g.sum(v[0])), frozen: 0 },
        OpCase { name: "mean", inputs: |r| vec![rand_of(&[3, 3])(r)], build: |g, v| Ok(g.mean(v[0])), frozen: 0 },
        OpCase {
            name: "moments",
            inputs: |r| vec![rand_of(&[5, 4])(r)],
            build: |g, v| {
                let (m, s) = g.moments(v[0])?;
                let m2 = g.square(m);
                let a = g.sum(m2);
                let b = g.sum(s);
                g.add(a, b)
            },
            frozen: 0,
        },
        OpCase { name: "row_norm", inputs: |r| vec![away_from_zero(r, &[4, 3])], build: |g, v| g.row_norm(v[0]), frozen: 0 },
        OpCase { name: "concat_cols", inputs: |r| vec![rand_of(&[3, 2])(r), rand_of(&[3, 4])(r)], build: |g, v| g.concat_cols(v[0], v[1]), frozen: 0 },
        OpCase { name: "step", inputs: |r| vec![rand_of(&[2, 4, 3])(r)], build: |g, v| g.step(v[0], 2), frozen: 0 },
        OpCase {
            name: "stack_steps",
            inputs: |r| vec![rand_of(&[2, 3])(r), rand_of(&[2, 3])(r), rand_of(&[2, 3])(r)],
            build: |g, v| g.stack_steps(v),
            frozen: 0,
        },
        OpCase { name: "pad_steps", inputs: |r| vec![rand_of(&[2, 3, 2])(r)], build: |g, v| g.pad_steps(v[0], 2), frozen: 0 },
        OpCase { name: "reshape", inputs: |r| vec![rand_of(&[2, 6])(r)], build: |g, v| g.reshape(v[0], &[3, 4]), frozen: 0 },
        OpCase { name: "gather", inputs: |r| vec![rand_of(&[3, 4])(r)], build: |g, v| g.gather(v[0], &[1, 3, 0]), frozen: 0 },
        OpCase {
            name: "kl_loss",
            inputs: |r| vec![rand_of(&[3, 2, 5])(r), rand_of(&[3, 2, 5])(r)],
            build: |g, v| {
                let t = g.detach(v[0]);
                losses::kl_loss(g, t, v[1], 3.0)
            },
            frozen: 1,
        },
        OpCase {
            name: "mse_logit_loss",
            inputs: |r| vec![rand_of(&[3, 2, 5])(r), rand_of(&[3, 2, 5])(r)],
            build: |g, v| losses::mse_logit_loss(g, v[0], v[1]),
            frozen: 1,
        },
        OpCase {
            name: "cross_entropy_loss",
            inputs: |r| vec![rand_of(&[2, 2, 5])(r)],
            build: |g, v| losses::cross_entropy_loss(g, v[0], &[4, 0, 2, 2]),
            frozen: 0,
        },
        OpCase {
            name: "kd_loss",
            inputs: |r| vec![rand_of(&[2, 2, 5])(r), rand_of(&[2, 2, 5])(r)],
            build: |g, v| {
                let t = g.detach(v[0]);
                losses::kd_loss(g, t, v[1], &[1, 3, 0, 4], 0.7, 5.0)
            },
            frozen: 1,
        },
        OpCase {
            name: "kd_mse_loss",
            inputs: |r| vec![rand_of(&[2, 2, 5])(r), rand_of(&[2, 2, 5])(r)],
            build: |g, v| losses::kd_mse_loss(g, v[0], v[1], &[1, 3, 0, 4], 0.7),
            frozen: 1,
        },
        OpCase {
            name: "metadata_loss",
            inputs: |r| vec![rand_of(&[6, 4])(r)],
            build: |g, v| losses::metadata_loss(g, v[0], &[0.1, -0.2, 0.0, 0.3], &[0.5, 0.2, 0.9, 0.1]),
            frozen: 0,
        },
        OpCase { name: "activation_loss", inputs: |r| vec![away_from_zero(r, &[4, 3])], build: |g, v| losses::activation_loss(g, v[0]), frozen: 0 },
        OpCase { name: "entropy_loss", inputs: |r| vec![rand_of(&[3, 2, 6])(r)], build: |g, v| losses::entropy_loss(g, v[0]), frozen: 0 },
    ]
}

pub fn tiny_model() -> SeqModelConfig {
    SeqModelConfig { input_dim: 3, hidden_dim: 4, num_beams: 5, obs_len: 3, horizon: 1 }
}

pub fn tiny_generator() -> GeneratorConfig {
    GeneratorConfig { noise_dim: 6, hidden_dim: 5, obs_len: 3, feature_dim: 3, horizon: 1 }
}

/// Checks the analytic gradient of `loss(params)` w.r.t. every (or, with
/// `sample`, a random subset of) parameter coordinates.
fn check_params<P: ParamSet + Clone>(
    params: &P,
    loss: impl Fn(&P, &mut Graph) -> Result<(Var, Vec<Var>)>,
    sample: Option<(usize, &mut ChaCha8Rng)>,
) -> Result<f64> {
    let mut g = Graph::new();
    let (l, vars) = loss(params, &mut g)?;
    g.backward(l)?;
    let mut p = params.clone();
    p.pull_grads(&g, &vars);
    let grads: Vec<Vec<f64>> = p.params().iter().map(|(_, t)| t.grad.clone().unwrap()).collect();
    let value = |p: &P| {
        let mut g = Graph::new();
        let (l, _) = loss(p, &mut g).unwrap();
        g.item(l).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut sample = sample;
    for (ti, grad) in grads.iter().enumerate() {
        let coords: Vec<usize> = match sample.as_mut() {
            Some((k, rng)) => (0..*k).map(|_| rng.random_range(0..grad.len())).collect(),
            None => (0..grad.len()).collect(),
        };
        for c in coords {
            let mut probe = params.clone();
            let orig = probe.params()[ti].1.data()[c];
            let mut at = |x: f64| {
                probe.params_mut()[ti].1.data_mut()[c] = x;
                value(&probe)
            };
            let numeric = (at(orig + STEP) - at(orig - STEP)) / (2.0 * STEP);
            worst = worst.max(max_relative_error(&[grad[c]], &[numeric], FLOOR));
        }
    }
    Ok(worst)
}

fn seq_input(rng: &mut ChaCha8Rng, c: &SeqModelConfig, batch: usize) -> Tensor {
    let mut x = uniform(rng, &[batch, c.seq_len(), c.input_dim], -1.0, 1.0);
    // Pipelines feed zeros in the V padded steps.
    let step = c.input_dim;
    for b in 0..batch {
        for t in c.obs_len..c.seq_len() {
            let start = (b * c.seq_len() + t) * step;
            x.data_mut()[start..start + step].fill(0.0);
        }
    }
    x
}

fn labels(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..m)).collect()
}

/// Teacher-shaped GRU with cross-entropy, gradients w.r.t. all parameters.
pub fn check_seq_ce(seed: u64, config: SeqModelConfig, sample: Option<usize>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SeqModel::new(config, seed)?;
    let batch = 2;
    let x = seq_input(&mut rng, &config, batch);
    let y = labels(&mut rng, batch * config.num_heads(), config.num_beams);
    let loss = |p: &dfkd_beam::nn::SeqModelParams, g: &mut Graph| {
        let m = SeqModel { config, params: p.clone() };
        let xv = g.constant(x.clone());
        let out = m.forward(g, xv, true)?;
        Ok((losses::cross_entropy_loss(g, out.logits, &y)?, out.param_vars))
    };
    check_params(&model.params, loss, sample.map(|k| (k, &mut rng)))
}

/// Gradient of the teacher's loss w.r.t. its input sequence.
pub fn check_seq_input(seed: u64) -> Result<f64> {
    let config = tiny_model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SeqModel::new(config, seed)?;
    let x = seq_input(&mut rng, &config, 2);
    let build = |g: &mut Graph, x: Var| -> Result<Var> {
        let out = model.forward(g, x, false)?;
        let h = g.square(out.last_hidden);
        let hs = g.sum(h);
        let e = losses::entropy_loss(g, out.logits)?;
        g.add(hs, e)
    };
    let mut g = Graph::new();
    let xv = g.leaf(x.clone().with_grad());
    let l = build(&mut g, xv)?;
    g.backward(l)?;
    let analytic = g.grad(xv).unwrap().to_vec();
    let numeric = numeric_gradient(
        |d| {
            let mut g = Graph::new();
            let xv = g.constant(Tensor::new(x.shape(), d.to_vec()).unwrap());
            let l = build(&mut g, xv).unwrap();
            g.item(l).unwrap()
        },
        x.data(),
        STEP,
    );
    Ok(max_relative_error(&analytic, &numeric, FLOOR))
}

/// Student distilled from a fixed teacher with the KL loss.
pub fn check_student_kl(seed: u64) -> Result<f64> {
    let config = tiny_model().with_hidden(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let student = SeqModel::new(config, seed)?;
    let x = seq_input(&mut rng, &config, 3);
    let t = uniform(&mut rng, &[3, config.num_heads(), config.num_beams], -2.0, 2.0);
    let loss = |p: &dfkd_beam::nn::SeqModelParams, g: &mut Graph| {
        let m = SeqModel { config, params: p.clone() };
        let xv = g.constant(x.clone());
        let out = m.forward(g, xv, true)?;
        let tv = g.constant(t.clone());
        Ok((losses::kl_loss(g, tv, out.logits, 2.0)?, out.param_vars))
    };
    check_params(&student.params, loss, None)
}

/// Generator through a frozen teacher with the weighted inversion loss.
pub fn check_generator(seed: u64) -> Result<f64> {
    let mc = tiny_model();
    let gc = tiny_generator();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = SeqModel::new(mc, seed + 1000)?;
    let gen = Generator::new(gc, seed)?;
    let noise = uniform(&mut rng, &[4, gc.noise_dim], -2.0, 2.0);
    let mean: Vec<f64> = (0..mc.hidden_dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    let var: Vec<f64> = (0..mc.hidden_dim).map(|_| rng.random_range(0.05..0.5)).collect();
    let weights = GeneratorLossWeights { alpha: 0.3, beta: 0.2 };
    let loss = |p: &dfkd_beam::nn::GeneratorParams, g: &mut Graph| {
        let gm = Generator { config: gc, params: p.clone() };
        let nv = g.constant(noise.clone());
        let out = gm.forward(g, nv, true)?;
        let t = teacher.forward(g, out.samples, false)?;
        let l = losses::generator_loss(g, GeneratorLossKind::Weighted, weights, t.last_hidden, t.logits, &mean, &var)?;
        Ok((l.total, out.param_vars))
    };
    check_params(&gen.params, loss, None)
}

#[derive(Debug)]
pub struct GradReport {
    pub checks: usize,
    pub worst: f64,
    pub worst_case: String,
    pub failures: Vec<String>,
}

/// Every op and composite over `seeds`; composites at full teacher size are
/// spot-checked on sampled coordinates for the first two seeds.
pub fn gradient_suite(seeds: std::ops::Range<u64>) -> GradReport {
    let mut report = GradReport { checks: 0, worst: 0.0, worst_case: String::new(), failures: Vec::new() };
    let mut record = |name: &str, seed: u64, r: Result<f64>| {
        report.checks += 1;
        match r {
            Ok(e) => {
                if e > report.worst {
                    report.worst = e;
                    report.worst_case = format!("{name} seed {seed}");
                }
                if !(e < TOL) {
                    report.failures.push(format!("{name} seed {seed}: rel err {e:.3e}"));
                }
            }
            Err(err) => report.failures.push(format!("{name} seed {seed}: {err}")),
        }
    };
    let cases = op_cases();
    for seed in seeds.clone() {
        for case in &cases {
            record(case.name, seed, check_op(case, seed));
        }
        record("gru_cross_entropy", seed, check_seq_ce(seed, tiny_model(), None));
        record("gru_input", seed, check_seq_input(seed));
        record("student_kl", seed, check_student_kl(seed));
        record("generator_through_teacher", seed, check_generator(seed));
    }
    for seed in seeds.take(2) {
        record("teacher_full_size", seed, check_seq_ce(seed, SeqModelConfig::teacher(32), Some(6)));
        record("student_full_size", seed, check_seq_ce(seed, SeqModelConfig::student(32), Some(6)));
    }
    report
}
