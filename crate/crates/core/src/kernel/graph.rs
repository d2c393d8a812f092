//! Tape-based reverse-mode differentiation over 2-D `f64` arrays.
//!
//! Every op appends a node to the tape; [`Graph::backward`] walks the tape
//! in reverse and accumulates adjoints. A tape belongs to one worker and is
//! discarded after the backward pass.

use super::{KernelError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Leaky(Var, f64),
    Gather(Var, Vec<usize>),
    Scatter {
        src: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
    Conv {
        subj: Var,
        rel: Var,
        kernel: Var,
        bias: Var,
        width: usize,
    },
    CrossEntropy(Var, Vec<usize>),
    SumAll(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not reach the output.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> KernelError {
    KernelError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input array (parameter or constant) to the tape.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.value(v).dims2()
    }

    /// `a (m×k) · b (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(mismatch("matmul", self.value(a), self.value(b)));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a (m×k) · bᵀ` with `b (n×k)`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(mismatch("matmul_nt", self.value(a), self.value(b)));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ar = &ad[i * k..(i + 1) * k];
            for j in 0..n {
                let br = &bd[j * k..(j + 1) * k];
                out[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b)))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, KernelError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims2() != tb.dims2() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a `1×n` row to every row of `a (m×n)`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, KernelError> {
        let (m, n) = self.dims(a);
        if self.dims(row) != (1, n) {
            return Err(mismatch("add_row", self.value(a), self.value(row)));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for i in 0..m {
            for (x, y) in out[i * n..(i + 1) * n].iter_mut().zip(&r) {
                *x += y;
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddRow(a, row)))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(a).map(|x| scale * x + shift);
        self.push(t, Op::Affine(a, scale))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    /// `x` for `x ≥ 0`, `slope · x` otherwise.
    pub fn leaky(&mut self, a: Var, slope: f64) -> Var {
        let t = self.value(a).map(|x| if x >= 0.0 { x } else { slope * x });
        self.push(t, Op::Leaky(a, slope))
    }

    /// Selects rows of `a` by index.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var, KernelError> {
        let (m, n) = self.dims(a);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            if i >= m {
                return Err(KernelError::IndexOutOfRange { op: "gather", index: i, rows: m });
            }
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        Ok(self.push(Tensor::matrix(index.len(), n, out)?, Op::Gather(a, index.to_vec())))
    }

    /// `out[targets[i]] += weights[i] · src[i]` into an `out_rows × n` array.
    pub fn scatter(&mut self, src: Var, targets: &[usize], weights: &[f64], out_rows: usize) -> Result<Var, KernelError> {
        let (m, n) = self.dims(src);
        if targets.len() != m || weights.len() != m {
            return Err(KernelError::ShapeMismatch {
                op: "scatter",
                left: vec![m, n],
                right: vec![targets.len(), weights.len()],
            });
        }
        let data = self.value(src).data();
        let mut out = vec![0.0; out_rows * n];
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if t >= out_rows {
                return Err(KernelError::IndexOutOfRange { op: "scatter", index: t, rows: out_rows });
            }
            for (o, x) in out[t * n..(t + 1) * n].iter_mut().zip(&data[i * n..(i + 1) * n]) {
                *o += w * x;
            }
        }
        let t = Tensor::matrix(out_rows, n, out)?;
        Ok(self.push(
            t,
            Op::Scatter {
                src,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// Stacks `subj` and `rel` rows (each `B×d`) as a two-channel signal and
    /// applies `C` same-padded 1-D convolutions of odd `width`. `kernel` is
    /// `C × (2·width)` laid out `[channel][input row][tap]`, `bias` is `1×C`.
    /// Output is `B × (C·d)`, channel-major per row.
    pub fn conv_stack(&mut self, subj: Var, rel: Var, kernel: Var, bias: Var, width: usize) -> Result<Var, KernelError> {
        let (b, d) = self.dims(subj);
        if self.dims(rel) != (b, d) {
            return Err(mismatch("conv_stack", self.value(subj), self.value(rel)));
        }
        let (c, kw) = self.dims(kernel);
        if width % 2 == 0 || kw != 2 * width || self.dims(bias) != (1, c) {
            return Err(mismatch("conv_stack", self.value(kernel), self.value(bias)));
        }
        let half = (width / 2) as isize;
        let (sd, rd) = (self.value(subj).data(), self.value(rel).data());
        let (kd, bd) = (self.value(kernel).data(), self.value(bias).data());
        let mut out = vec![0.0; b * c * d];
        for bi in 0..b {
            let rows = [&sd[bi * d..(bi + 1) * d], &rd[bi * d..(bi + 1) * d]];
            for ch in 0..c {
                let taps = &kd[ch * kw..(ch + 1) * kw];
                let dst = &mut out[bi * c * d + ch * d..bi * c * d + (ch + 1) * d];
                for (j, y) in dst.iter_mut().enumerate() {
                    let mut acc = bd[ch];
                    for (row_i, row) in rows.iter().enumerate() {
                        for u in 0..width {
                            let src = j as isize + u as isize - half;
                            if src >= 0 && (src as usize) < d {
                                acc += taps[row_i * width + u] * row[src as usize];
                            }
                        }
                    }
                    *y = acc;
                }
            }
        }
        let t = Tensor::matrix(b, c * d, out)?;
        Ok(self.push(
            t,
            Op::Conv {
                subj,
                rel,
                kernel,
                bias,
                width,
            },
        ))
    }

    /// Summed softmax cross-entropy of each logit row against its gold column.
    pub fn cross_entropy(&mut self, logits: Var, gold: &[usize]) -> Result<Var, KernelError> {
        let (b, n) = self.dims(logits);
        if gold.len() != b {
            return Err(KernelError::ShapeMismatch {
                op: "cross_entropy",
                left: vec![b, n],
                right: vec![gold.len()],
            });
        }
        let z = self.value(logits).data();
        let mut total = 0.0;
        for (i, &g) in gold.iter().enumerate() {
            if g >= n {
                return Err(KernelError::IndexOutOfRange { op: "cross_entropy", index: g, rows: n });
            }
            let row = &z[i * n..(i + 1) * n];
            total += log_sum_exp(row) - row[g];
        }
        Ok(self.push(Tensor::scalar(total), Op::CrossEntropy(logits, gold.to_vec())))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Reverse pass seeded with ones at `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0; self.nodes[output.0].value.len()]);
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let len = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let ga = self.slot(grads, *a);
                for r in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[r * n + j] * bd[p * n + j];
                        }
                        ga[r * k + p] += acc;
                    }
                }
                let gb = self.slot(grads, *b);
                for r in 0..m {
                    for p in 0..k {
                        let x = ad[r * k + p];
                        if x != 0.0 {
                            for j in 0..n {
                                gb[p * n + j] += x * g[r * n + j];
                            }
                        }
                    }
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let ga = self.slot(grads, *a);
                for r in 0..m {
                    for j in 0..n {
                        let w = g[r * n + j];
                        if w != 0.0 {
                            for p in 0..k {
                                ga[r * k + p] += w * bd[j * k + p];
                            }
                        }
                    }
                }
                let gb = self.slot(grads, *b);
                for r in 0..m {
                    for j in 0..n {
                        let w = g[r * n + j];
                        if w != 0.0 {
                            for p in 0..k {
                                gb[j * k + p] += w * ad[r * k + p];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(self.slot(grads, *a), g, 1.0);
                add_into(self.slot(grads, *b), g, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(self.slot(grads, *a), g, 1.0);
                add_into(self.slot(grads, *b), g, -1.0);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let ga = self.slot(grads, *a);
                for ((x, gy), y) in ga.iter_mut().zip(g).zip(bd) {
                    *x += gy * y;
                }
                let gb = self.slot(grads, *b);
                for ((x, gy), y) in gb.iter_mut().zip(g).zip(ad) {
                    *x += gy * y;
                }
            }
            Op::AddRow(a, row) => {
                add_into(self.slot(grads, *a), g, 1.0);
                let n = self.dims(*row).1;
                let gr = self.slot(grads, *row);
                for chunk in g.chunks(n) {
                    add_into(gr, chunk, 1.0);
                }
            }
            Op::Affine(a, scale) => add_into(self.slot(grads, *a), g, *scale),
            Op::Tanh(a) => {
                let y = node.value.data();
                let ga = self.slot(grads, *a);
                for ((x, gy), yv) in ga.iter_mut().zip(g).zip(y) {
                    *x += gy * (1.0 - yv * yv);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let ga = self.slot(grads, *a);
                for ((x, gy), yv) in ga.iter_mut().zip(g).zip(y) {
                    *x += gy * yv * (1.0 - yv);
                }
            }
            Op::Leaky(a, slope) => {
                let input = self.value(*a).data();
                let ga = self.slot(grads, *a);
                for ((x, gy), xin) in ga.iter_mut().zip(g).zip(input) {
                    *x += if *xin >= 0.0 { *gy } else { slope * gy };
                }
            }
            Op::Gather(a, index) => {
                let n = self.dims(*a).1;
                let ga = self.slot(grads, *a);
                for (row, &src) in index.iter().enumerate() {
                    add_into(&mut ga[src * n..(src + 1) * n], &g[row * n..(row + 1) * n], 1.0);
                }
            }
            Op::Scatter { src, targets, weights } => {
                let n = self.dims(*src).1;
                let gs = self.slot(grads, *src);
                for (row, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    add_into(&mut gs[row * n..(row + 1) * n], &g[t * n..(t + 1) * n], w);
                }
            }
            Op::Conv {
                subj,
                rel,
                kernel,
                bias,
                width,
            } => self.conv_backward(g, grads, *subj, *rel, *kernel, *bias, *width),
            Op::CrossEntropy(logits, gold) => {
                let (_, n) = self.dims(*logits);
                let z = self.value(*logits).data();
                let scale = g[0];
                let gl = self.slot(grads, *logits);
                for (r, &gi) in gold.iter().enumerate() {
                    let row = &z[r * n..(r + 1) * n];
                    let lse = log_sum_exp(row);
                    for j in 0..n {
                        let p = (row[j] - lse).exp();
                        let target = if j == gi { 1.0 } else { 0.0 };
                        gl[r * n + j] += scale * (p - target);
                    }
                }
            }
            Op::SumAll(a) => {
                let scale = g[0];
                for x in self.slot(grads, *a) {
                    *x += scale;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        subj: Var,
        rel: Var,
        kernel: Var,
        bias: Var,
        width: usize,
    ) {
        let (b, d) = self.dims(subj);
        let (c, kw) = self.dims(kernel);
        let half = (width / 2) as isize;
        let (sd, rd, kd) = (
            self.value(subj).data().to_vec(),
            self.value(rel).data().to_vec(),
            self.value(kernel).data().to_vec(),
        );
        let mut g_in = [vec![0.0; b * d], vec![0.0; b * d]];
        let mut g_k = vec![0.0; c * kw];
        let mut g_b = vec![0.0; c];
        for bi in 0..b {
            let rows = [&sd[bi * d..(bi + 1) * d], &rd[bi * d..(bi + 1) * d]];
            for ch in 0..c {
                let gy = &g[bi * c * d + ch * d..bi * c * d + (ch + 1) * d];
                for (j, &gv) in gy.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    g_b[ch] += gv;
                    for (row_i, row) in rows.iter().enumerate() {
                        for u in 0..width {
                            let src = j as isize + u as isize - half;
                            if src >= 0 && (src as usize) < d {
                                let s = src as usize;
                                g_k[ch * kw + row_i * width + u] += gv * row[s];
                                g_in[row_i][bi * d + s] += gv * kd[ch * kw + row_i * width + u];
                            }
                        }
                    }
                }
            }
        }
        add_into(self.slot(grads, subj), &g_in[0], 1.0);
        add_into(self.slot(grads, rel), &g_in[1], 1.0);
        add_into(self.slot(grads, kernel), &g_k, 1.0);
        add_into(self.slot(grads, bias), &g_b, 1.0);
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let dst = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, y) in dst.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    fn assert_fidelity(params: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Result<Var, KernelError>) {
        let err = check_gradients(f, &params, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn primitive_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // matmul, add, sub, mul, add_row
        assert_fidelity(
            vec![random(&mut rng, 3, 4), random(&mut rng, 4, 2), random(&mut rng, 1, 2), random(&mut rng, 3, 2)],
            |g, p| {
                let m = g.matmul(p[0], p[1])?;
                let m = g.add_row(m, p[2])?;
                let q = g.mul(m, p[3])?;
                let s = g.sub(q, p[3])?;
                let s = g.add(s, m)?;
                Ok(g.sum_all(s))
            },
        );
        // tanh, sigmoid, leaky, affine
        assert_fidelity(vec![random(&mut rng, 2, 5), random(&mut rng, 2, 5)], |g, p| {
            let a = g.tanh(p[0]);
            let b = g.sigmoid(p[1]);
            let c = g.mul(a, b)?;
            let c = g.affine(c, 3.0, 0.5);
            let c = g.leaky(c, 0.23);
            let c = g.mul(c, c)?;
            Ok(g.sum_all(c))
        });
        // matmul_nt + cross entropy
        assert_fidelity(vec![random(&mut rng, 3, 4), random(&mut rng, 6, 4)], |g, p| {
            let z = g.matmul_nt(p[0], p[1])?;
            g.cross_entropy(z, &[0, 5, 2])
        });
        // gather + scatter
        assert_fidelity(vec![random(&mut rng, 4, 3), random(&mut rng, 4, 3)], |g, p| {
            let x = g.gather(p[0], &[0, 2, 2, 3])?;
            let y = g.scatter(x, &[1, 1, 0, 3], &[0.5, 0.5, 1.0, 2.0], 4)?;
            let z = g.mul(y, p[1])?;
            let z = g.tanh(z);
            Ok(g.sum_all(z))
        });
        // convolution
        assert_fidelity(
            vec![random(&mut rng, 2, 5), random(&mut rng, 2, 5), random(&mut rng, 3, 6), random(&mut rng, 1, 3), random(&mut rng, 15, 2)],
            |g, p| {
                let c = g.conv_stack(p[0], p[1], p[2], p[3], 3)?;
                let c = g.tanh(c);
                let out = g.matmul(c, p[4])?;
                let out = g.mul(out, out)?;
                Ok(g.sum_all(out))
            },
        );
    }

    #[test]
    fn conv_matches_hand_computation() {
        // one channel, width 3, subject row [1,2,3], relation row [0,1,0]
        let mut g = Graph::new();
        let s = g.leaf(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        let r = g.leaf(Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]).unwrap());
        let k = g.leaf(Tensor::matrix(1, 6, vec![1.0, 0.0, -1.0, 0.0, 2.0, 0.0]).unwrap());
        let b = g.leaf(Tensor::matrix(1, 1, vec![0.5]).unwrap());
        let y = g.conv_stack(s, r, k, b, 3).unwrap();
        // y[j] = s[j-1] - s[j+1] + 2 r[j] + 0.5
        assert_eq!(g.value(y).data(), &[-2.0 + 0.5, 1.0 - 3.0 + 2.0 + 0.5, 2.0 + 0.5]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_n() {
        let mut g = Graph::new();
        let z = g.leaf(Tensor::zeros(&[1, 10]));
        let l = g.cross_entropy(z, &[3]).unwrap();
        assert!((g.value(l).item() - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(KernelError::ShapeMismatch { .. })));
        assert!(g.gather(a, &[5]).is_err());
    }
}
