use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Square(Var),
    Exp(Var),
    Softmax(Var, f64),
    LogSoftmax(Var, f64),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    VarRows(Var),
    RowNorm(Var),
    ConcatCols(Var, Var),
    Step(Var, usize),
    Stack(Vec<Var>),
    PadSteps(Var, usize),
    Reshape(Var),
    Gather(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only tape of tensor operations.
///
/// Values are computed eagerly as nodes are appended; creation order is a
/// topological order, so [`Graph::backward`] walks the tape in reverse.
/// Gradients accumulate (`+=`) into every reachable node that requires them;
/// call [`Graph::zero_grads`] between backward passes to reset.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// `c = beta * c + a · b`, with optional transposition of either operand.
/// Shapes are given post-transposition: `a` is m×k, `b` is k×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the slices hold exactly the strided extents described above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn is_scalar(t: &Tensor) -> bool {
    t.len() == 1 && t.shape().len() <= 1
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    let m = *t.shape().last().unwrap_or(&1);
    let r = if m == 0 { 0 } else { t.len() / m };
    (r, m)
}

fn softmax_rows(z: &[f64], cols: usize, temperature: f64, out: &mut [f64]) {
    for (row, o) in z.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (oi, &zi) in o.iter_mut().zip(row) {
            *oi = ((zi - max) / temperature).exp();
            s += *oi;
        }
        o.iter_mut().for_each(|v| *v /= s);
    }
}

fn log_softmax_rows(z: &[f64], cols: usize, temperature: f64, out: &mut [f64]) {
    for (row, o) in z.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row
            .iter()
            .map(|&zi| ((zi - max) / temperature).exp())
            .sum::<f64>()
            .ln();
        for (oi, &zi) in o.iter_mut().zip(row) {
            *oi = (zi - max) / temperature - lse;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op, inputs: &[Var]) -> Var {
        value.requires_grad = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad);
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf. Gradients are tracked iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf that never receives gradients.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        t.grad = None;
        self.leaf(t)
    }

    /// Copies the value of `v` into a new constant leaf.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = Tensor::new(self.shape(v), self.data(v).to_vec()).expect("shape preserved");
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn item(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, 0.0);
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape(), data)
        } else if is_scalar(tb) {
            let y = tb.data()[0];
            Tensor::new(ta.shape(), ta.data().iter().map(|&x| f(x, y)).collect())
        } else if is_scalar(ta) {
            let x = ta.data()[0];
            Tensor::new(tb.shape(), tb.data().iter().map(|&y| f(x, y)).collect())
        } else {
            Err(Error::shape(name, ta.shape(), tb.shape()))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the vector `bias` (length n) to every row of the m×n matrix `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(Error::shape("add_row", sa, sb));
        }
        let n = sa[1];
        let b = self.data(bias);
        let data = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b[i % n])
            .collect();
        let t = Tensor::new(sa, data)?;
        Ok(self.push(t, Op::AddRow(a, bias), &[a, bias]))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|&x| f(x)).collect())
            .expect("shape preserved");
        self.push(t, op, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    fn check_temperature(temperature: f64) -> Result<()> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Parameter(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(())
    }

    /// Softmax of `z / temperature` along the last axis, max-stabilized.
    pub fn softmax(&mut self, z: Var, temperature: f64) -> Result<Var> {
        Self::check_temperature(temperature)?;
        let tz = self.value(z);
        let (_, cols) = rows_cols(tz);
        let mut out = vec![0.0; tz.len()];
        softmax_rows(tz.data(), cols, temperature, &mut out);
        let t = Tensor::new(tz.shape(), out)?;
        Ok(self.push(t, Op::Softmax(z, temperature), &[z]))
    }

    /// Log-softmax of `z / temperature` along the last axis.
    pub fn log_softmax(&mut self, z: Var, temperature: f64) -> Result<Var> {
        Self::check_temperature(temperature)?;
        let tz = self.value(z);
        let (_, cols) = rows_cols(tz);
        let mut out = vec![0.0; tz.len()];
        log_softmax_rows(tz.data(), cols, temperature, &mut out);
        let t = Tensor::new(tz.shape(), out)?;
        Ok(self.push(t, Op::LogSoftmax(z, temperature), &[z]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Per-column mean and biased (divide-by-B) variance of a B×H matrix.
    pub fn moments(&mut self, x: Var) -> Result<(Var, Var)> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape("moments", sx, &[0, 0]));
        }
        let (b, h) = (sx[0], sx[1]);
        if b == 0 {
            return Err(Error::Parameter("moments over an empty batch".into()));
        }
        let data = self.data(x);
        let mut mean = vec![0.0; h];
        for row in data.chunks(h) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = vec![0.0; h];
        for row in data.chunks(h) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= b as f64);
        let mv = self.push(Tensor::from_vec(mean), Op::MeanRows(x), &[x]);
        let vv = self.push(Tensor::from_vec(var), Op::VarRows(x), &[x]);
        Ok((mv, vv))
    }

    /// Euclidean norm of each row of a B×H matrix, giving a length-B vector.
    pub fn row_norm(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape("row_norm", sx, &[0, 0]));
        }
        let h = sx[1];
        let norms: Vec<f64> = self
            .data(x)
            .chunks(h.max(1))
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok(self.push(Tensor::from_vec(norms), Op::RowNorm(x), &[x]))
    }

    /// Concatenates two matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::shape("concat_cols", sa, sb));
        }
        let (rows, p, q) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(rows * (p + q));
        for (ra, rb) in self.data(a).chunks(p.max(1)).zip(self.data(b).chunks(q.max(1))) {
            out.extend_from_slice(&ra[..p]);
            out.extend_from_slice(&rb[..q]);
        }
        let t = Tensor::new(&[rows, p + q], out)?;
        Ok(self.push(t, Op::ConcatCols(a, b), &[a, b]))
    }

    /// Slices time step `t` out of a B×S×D sequence, giving B×D.
    pub fn step(&mut self, x: Var, t: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 || t >= sx[1] {
            return Err(Error::shape("step", sx, &[t]));
        }
        let (b, s, d) = (sx[0], sx[1], sx[2]);
        let data = self.data(x);
        let mut out = Vec::with_capacity(b * d);
        for i in 0..b {
            let off = (i * s + t) * d;
            out.extend_from_slice(&data[off..off + d]);
        }
        let tt = Tensor::new(&[b, d], out)?;
        Ok(self.push(tt, Op::Step(x, t), &[x]))
    }

    /// Stacks equally shaped B×M matrices into a B×S×M sequence.
    pub fn stack_steps(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Parameter("stack_steps of nothing".into()))?;
        let s0 = self.shape(*first).to_vec();
        if s0.len() != 2 {
            return Err(Error::shape("stack_steps", &s0, &[0, 0]));
        }
        for v in xs {
            if self.shape(*v) != s0.as_slice() {
                return Err(Error::shape("stack_steps", &s0, self.shape(*v)));
            }
        }
        let (b, m, s) = (s0[0], s0[1], xs.len());
        let mut out = vec![0.0; b * s * m];
        for (t, v) in xs.iter().enumerate() {
            for (i, row) in self.data(*v).chunks(m.max(1)).enumerate() {
                let off = (i * s + t) * m;
                out[off..off + m].copy_from_slice(&row[..m]);
            }
        }
        let tt = Tensor::new(&[b, s, m], out)?;
        Ok(self.push(tt, Op::Stack(xs.to_vec()), xs))
    }

    /// Appends `pad` all-zero steps to a B×S×D sequence.
    pub fn pad_steps(&mut self, x: Var, pad: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 {
            return Err(Error::shape("pad_steps", sx, &[0, 0, 0]));
        }
        let (b, s, d) = (sx[0], sx[1], sx[2]);
        let mut out = Vec::with_capacity(b * (s + pad) * d);
        for seq in self.data(x).chunks((s * d).max(1)).take(b) {
            out.extend_from_slice(seq);
            out.extend(std::iter::repeat_n(0.0, pad * d));
        }
        let t = Tensor::new(&[b, s + pad, d], out)?;
        Ok(self.push(t, Op::PadSteps(x, pad), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let n: usize = shape.iter().product();
        if n != t.len() {
            return Err(Error::shape("reshape", t.shape(), shape));
        }
        let out = Tensor::new(shape, t.data().to_vec())?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Picks `x[r, index[r]]` for every row `r` of the last-axis view of `x`.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = rows_cols(self.value(x));
        if index.len() != rows {
            return Err(Error::shape("gather", self.shape(x), &[index.len()]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= cols) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range [0, {cols})"
            )));
        }
        let d = self.data(x);
        let out = index.iter().enumerate().map(|(r, &i)| d[r * cols + i]).collect();
        Ok(self.push(Tensor::from_vec(out), Op::Gather(x, index.to_vec()), &[x]))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    ///
    /// Gradients are added to whatever each node already holds.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let needs = |v: Var| self.nodes[v.0].value.requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !needs(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| gemm(m, n, k, g, false, db, true, ga, 1.0));
                acc(*b, &mut |gb| gemm(k, m, n, da, true, g, false, gb, 1.0));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                for (v, s) in [(*a, 1.0), (*b, sign)] {
                    let scalar = self.nodes[v.0].value.len() == 1 && g.len() != 1;
                    acc(v, &mut |gv| {
                        if scalar {
                            gv[0] += s * g.iter().sum::<f64>();
                        } else {
                            gv.iter_mut().zip(g).for_each(|(x, y)| *x += s * y);
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    let od = self.data(other);
                    let scalar = self.nodes[v.0].value.len() == 1 && g.len() != 1;
                    acc(v, &mut |gv| {
                        if scalar {
                            gv[0] += g.iter().zip(od.iter().cycle()).map(|(x, y)| x * y).sum::<f64>();
                        } else if od.len() == 1 {
                            gv.iter_mut().zip(g).for_each(|(x, y)| *x += y * od[0]);
                        } else {
                            gv.iter_mut()
                                .zip(g)
                                .zip(od)
                                .for_each(|((x, y), o)| *x += y * o);
                        }
                    });
                }
            }
            Op::AddRow(a, bias) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let n = self.nodes[bias.0].value.len();
                acc(*bias, &mut |gb| {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y))
            }
            Op::Relu(a) => {
                let d = self.data(*a);
                acc(*a, &mut |ga| {
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(d) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                })
            }
            Op::Tanh(a) => acc(*a, &mut |ga| {
                for ((x, y), o) in ga.iter_mut().zip(g).zip(out) {
                    *x += y * (1.0 - o * o);
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for ((x, y), o) in ga.iter_mut().zip(g).zip(out) {
                    *x += y * o * (1.0 - o);
                }
            }),
            Op::Square(a) => {
                let d = self.data(*a);
                acc(*a, &mut |ga| {
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(d) {
                        *x += 2.0 * v * y;
                    }
                })
            }
            Op::Exp(a) => acc(*a, &mut |ga| {
                for ((x, y), o) in ga.iter_mut().zip(g).zip(out) {
                    *x += y * o;
                }
            }),
            Op::Softmax(a, t) => {
                let (_, cols) = rows_cols(&node.value);
                acc(*a, &mut |ga| {
                    for ((gr, yr), pr) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(out.chunks(cols)) {
                        let dot: f64 = yr.iter().zip(pr).map(|(y, p)| y * p).sum();
                        for ((x, y), p) in gr.iter_mut().zip(yr).zip(pr) {
                            *x += p * (y - dot) / t;
                        }
                    }
                })
            }
            Op::LogSoftmax(a, t) => {
                let (_, cols) = rows_cols(&node.value);
                acc(*a, &mut |ga| {
                    for ((gr, yr), lr) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(out.chunks(cols)) {
                        let total: f64 = yr.iter().sum();
                        for ((x, y), l) in gr.iter_mut().zip(yr).zip(lr) {
                            *x += (y - l.exp() * total) / t;
                        }
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0] / n))
            }
            Op::MeanRows(a) => {
                let b = self.shape(*a)[0] as f64;
                let h = g.len();
                acc(*a, &mut |ga| {
                    for row in ga.chunks_mut(h) {
                        row.iter_mut().zip(g).for_each(|(x, y)| *x += y / b);
                    }
                })
            }
            Op::VarRows(a) => {
                let s = self.shape(*a);
                let (b, h) = (s[0], s[1]);
                let d = self.data(*a);
                let mut mean = vec![0.0; h];
                for row in d.chunks(h) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / b as f64);
                }
                acc(*a, &mut |ga| {
                    for (gr, xr) in ga.chunks_mut(h).zip(d.chunks(h)) {
                        for (j, x) in gr.iter_mut().enumerate() {
                            *x += g[j] * 2.0 * (xr[j] - mean[j]) / b as f64;
                        }
                    }
                })
            }
            Op::RowNorm(a) => {
                let h = self.shape(*a)[1];
                let d = self.data(*a);
                acc(*a, &mut |ga| {
                    for (r, (gr, xr)) in ga.chunks_mut(h).zip(d.chunks(h)).enumerate() {
                        if out[r] > 0.0 {
                            let c = g[r] / out[r];
                            gr.iter_mut().zip(xr).for_each(|(x, v)| *x += c * v);
                        }
                    }
                })
            }
            Op::ConcatCols(a, b) => {
                let p = self.shape(*a)[1];
                let q = self.shape(*b)[1];
                acc(*a, &mut |ga| {
                    for (gr, row) in ga.chunks_mut(p.max(1)).zip(g.chunks(p + q)) {
                        gr.iter_mut().zip(&row[..p]).for_each(|(x, y)| *x += y);
                    }
                });
                acc(*b, &mut |gb| {
                    for (gr, row) in gb.chunks_mut(q.max(1)).zip(g.chunks(p + q)) {
                        gr.iter_mut().zip(&row[p..]).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Step(x, t) => {
                let s = self.shape(*x);
                let (b, steps, d) = (s[0], s[1], s[2]);
                acc(*x, &mut |gx| {
                    for i in 0..b {
                        let off = (i * steps + t) * d;
                        gx[off..off + d]
                            .iter_mut()
                            .zip(&g[i * d..(i + 1) * d])
                            .for_each(|(a, y)| *a += y);
                    }
                })
            }
            Op::Stack(xs) => {
                let s = node.value.shape();
                let (b, steps, m) = (s[0], s[1], s[2]);
                for (t, v) in xs.iter().enumerate() {
                    acc(*v, &mut |gv| {
                        for i in 0..b {
                            let off = (i * steps + t) * m;
                            gv[i * m..(i + 1) * m]
                                .iter_mut()
                                .zip(&g[off..off + m])
                                .for_each(|(a, y)| *a += y);
                        }
                    })
                }
            }
            Op::PadSteps(x, pad) => {
                let s = self.shape(*x);
                let (steps, d) = (s[1], s[2]);
                let inner = steps * d;
                let outer = (steps + pad) * d;
                acc(*x, &mut |gx| {
                    for (gr, row) in gx.chunks_mut(inner.max(1)).zip(g.chunks(outer.max(1))) {
                        gr.iter_mut().zip(&row[..inner]).for_each(|(a, y)| *a += y);
                    }
                })
            }
            Op::Gather(x, index) => {
                let (_, cols) = rows_cols(&self.nodes[x.0].value);
                acc(*x, &mut |gx| {
                    for (r, &i) in index.iter().enumerate() {
                        gx[r * cols + i] += g[r];
                    }
                })
            }
        }
    }
}

/// Row-wise softmax outside any graph.
pub fn softmax_values(z: &[f64], cols: usize, temperature: f64) -> Result<Vec<f64>> {
    Graph::check_temperature(temperature)?;
    let mut out = vec![0.0; z.len()];
    softmax_rows(z, cols, temperature, &mut out);
    Ok(out)
}
