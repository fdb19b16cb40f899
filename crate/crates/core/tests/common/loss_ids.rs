//! Loss identities checked against directly coded reference formulas.

use dfkd_beam::autodiff::{Graph, Tensor};
use dfkd_beam::losses::{self, GeneratorLossKind, GeneratorLossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const M: usize = 64;

/// Plain double-loop KL(softmax(t/T) || softmax(s/T)) * T^2, averaged over rows.
pub fn reference_kl(t: &[f64], s: &[f64], m: usize, temp: f64) -> f64 {
    let rows = t.len() / m;
    let mut total = 0.0;
    for r in 0..rows {
        let p = reference_softmax(&t[r * m..(r + 1) * m], temp);
        let q = reference_softmax(&s[r * m..(r + 1) * m], temp);
        for i in 0..m {
            if p[i] > 0.0 {
                total += p[i] * (p[i] / q[i]).ln();
            }
        }
    }
    temp * temp * total / rows as f64
}

pub fn reference_softmax(z: &[f64], temp: f64) -> Vec<f64> {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - mx) / temp).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn reference_mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s / a.len() as f64
}

pub fn reference_entropy(z: &[f64], m: usize) -> f64 {
    let rows = z.len() / m;
    let mut total = 0.0;
    for r in 0..rows {
        for p in reference_softmax(&z[r * m..(r + 1) * m], 1.0) {
            if p > 0.0 {
                total -= p * p.ln();
            }
        }
    }
    total / rows as f64
}

pub fn reference_ce(z: &[f64], labels: &[usize], m: usize) -> f64 {
    let rows = z.len() / m;
    let mut total = 0.0;
    for r in 0..rows {
        let p = reference_softmax(&z[r * m..(r + 1) * m], 1.0);
        total -= p[labels[r]].ln();
    }
    total / rows as f64
}

pub fn kl(t: &[f64], s: &[f64], shape: &[usize], temp: f64) -> f64 {
    let mut g = Graph::new();
    let tv = g.constant(Tensor::new(shape, t.to_vec()).unwrap());
    let sv = g.constant(Tensor::new(shape, s.to_vec()).unwrap());
    let l = losses::kl_loss(&mut g, tv, sv, temp).unwrap();
    g.item(l).unwrap()
}

pub fn mse(t: &[f64], s: &[f64], shape: &[usize]) -> f64 {
    let mut g = Graph::new();
    let tv = g.constant(Tensor::new(shape, t.to_vec()).unwrap());
    let sv = g.constant(Tensor::new(shape, s.to_vec()).unwrap());
    let l = losses::mse_logit_loss(&mut g, tv, sv).unwrap();
    g.item(l).unwrap()
}

pub fn entropy(z: &[f64], shape: &[usize]) -> f64 {
    let mut g = Graph::new();
    let zv = g.constant(Tensor::new(shape, z.to_vec()).unwrap());
    let l = losses::entropy_loss(&mut g, zv).unwrap();
    g.item(l).unwrap()
}

pub fn ce(z: &[f64], shape: &[usize], labels: &[usize]) -> f64 {
    let mut g = Graph::new();
    let zv = g.constant(Tensor::new(shape, z.to_vec()).unwrap());
    let l = losses::cross_entropy_loss(&mut g, zv, labels).unwrap();
    g.item(l).unwrap()
}

pub fn kd(t: &[f64], s: &[f64], shape: &[usize], labels: &[usize], gamma: f64, temp: f64) -> f64 {
    let mut g = Graph::new();
    let tv = g.constant(Tensor::new(shape, t.to_vec()).unwrap());
    let sv = g.constant(Tensor::new(shape, s.to_vec()).unwrap());
    let l = losses::kd_loss(&mut g, tv, sv, labels, gamma, temp).unwrap();
    g.item(l).unwrap()
}

pub fn generator(kind: GeneratorLossKind, w: GeneratorLossWeights, feat: &[f64], h: usize, z: &[f64], zshape: &[usize], mean: &[f64], var: &[f64]) -> (f64, f64, f64, f64) {
    let mut g = Graph::new();
    let fv = g.constant(Tensor::new(&[feat.len() / h, h], feat.to_vec()).unwrap());
    let zv = g.constant(Tensor::new(zshape, z.to_vec()).unwrap());
    let l = losses::generator_loss(&mut g, kind, w, fv, zv, mean, var).unwrap();
    (g.item(l.total).unwrap(), l.metadata, l.activation, l.entropy)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Runs every identity; returns the list of violations.
pub fn loss_identity_suite(pairs: usize) -> Vec<String> {
    let mut bad = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let shape = [4, 4, M];
    let n: usize = shape.iter().product();
    let mut check = |ok: bool, what: String| {
        if !ok {
            bad.push(what);
        }
    };
    for i in 0..pairs {
        let scale = [0.5, 3.0, 20.0][i % 3];
        let t = rand_vec(&mut rng, n, scale);
        let s = rand_vec(&mut rng, n, scale);
        let temp = [1.0, 2.0, 5.0][i % 3];
        let labels: Vec<usize> = (0..16).map(|_| rng.random_range(0..M)).collect();

        let same = kl(&t, &t, &shape, temp);
        check(same.abs() <= 1e-10, format!("kl(z, z) = {same:e}"));
        let shifted: Vec<f64> = t.chunks(M).enumerate().flat_map(|(r, row)| row.iter().map(move |v| v + r as f64 * 1.7 - 9.0)).collect();
        let sh = kl(&t, &shifted, &shape, temp);
        check(sh.abs() <= 1e-10, format!("kl under row shift = {sh:e}"));
        let k = kl(&t, &s, &shape, temp);
        check(k >= -1e-12, format!("kl negative: {k:e}"));
        let want = reference_kl(&t, &s, M, temp);
        check((k - want).abs() <= 1e-10 * want.abs().max(1.0), format!("kl {k} vs reference {want}"));

        let e = entropy(&s, &shape);
        check((-1e-12..=(M as f64).ln() + 1e-12).contains(&e), format!("entropy {e} outside [0, ln M]"));
        let ew = reference_entropy(&s, M);
        check((e - ew).abs() <= 1e-10, format!("entropy {e} vs reference {ew}"));

        let c = rng.random_range(-3.0..3.0);
        let plus: Vec<f64> = t.iter().map(|v| v + c).collect();
        let m = mse(&t, &plus, &shape);
        check((m - c * c).abs() <= 1e-10, format!("mse(z, z+c) {m} vs c^2 {}", c * c));
        let mr = reference_mse(&t, &s);
        let ms = mse(&t, &s, &shape);
        check((ms - mr).abs() <= 1e-12 * mr.max(1.0), format!("mse {ms} vs reference {mr}"));
        check((ms - mse(&s, &t, &shape)).abs() <= 1e-12 * ms.max(1.0), "mse not symmetric".into());

        let cev = ce(&s, &shape, &labels);
        let cer = reference_ce(&s, &labels, M);
        check((cev - cer).abs() <= 1e-10 * cer.max(1.0), format!("ce {cev} vs reference {cer}"));
        let k0 = kd(&t, &s, &shape, &labels, 0.0, temp);
        check(k0 == cev, format!("kd(gamma=0) {k0} != ce {cev}"));
        let k1 = kd(&t, &s, &shape, &labels, 1.0, temp);
        check(k1 == k, format!("kd(gamma=1) {k1} != kl {k}"));
        let k7 = kd(&t, &s, &shape, &labels, 0.7, temp);
        check((k7 - (0.7 * k + 0.3 * cev)).abs() <= 1e-12 * k7.abs().max(1.0), format!("kd(0.7) {k7}"));

        let h = 8;
        let feat = rand_vec(&mut rng, 6 * h, 1.0);
        let mean = rand_vec(&mut rng, h, 0.5);
        let var: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..1.0)).collect();
        let zero = GeneratorLossWeights { alpha: 0.0, beta: 0.0 };
        let (w0, meta, act, ent) = generator(GeneratorLossKind::Weighted, zero, &feat, h, &s, &shape, &mean, &var);
        check(w0 == meta, format!("weighted(0, 0) {w0} != metadata {meta}"));
        let wts = GeneratorLossWeights { alpha: rng.random_range(0.0..1.0), beta: rng.random_range(0.0..1.0) };
        let (wv, ..) = generator(GeneratorLossKind::Weighted, wts, &feat, h, &s, &shape, &mean, &var);
        let hand = meta + wts.alpha * act + wts.beta * ent;
        check((wv - hand).abs() <= 1e-12 * hand.abs().max(1.0), format!("weighted {wv} vs recombined {hand}"));
    }
    bad
}
