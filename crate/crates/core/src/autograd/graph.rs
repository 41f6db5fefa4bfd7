//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Ops are coarse (matmul, layer norm, fused multi-head attention, softmax
//! cross-entropy, InfoNCE) so a transformer forward pass stays a few hundred
//! nodes. Every op records what its backward rule needs; [`Graph::backward`]
//! walks the nodes in reverse creation order.

use super::tensor::Tensor;
use crate::Scalar;

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, bt: bool },
    AddBias { x: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    MulConst { x: Var, c: Vec<T> },
    Scale { x: Var, c: T },
    AddScalar { x: Var },
    Square { x: Var },
    Gelu { x: Var },
    LeakyRelu { x: Var, slope: T },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gather { table: Var, idx: Vec<usize> },
    Reshape { x: Var },
    GroupSum { x: Var, group: usize, weights: Vec<T> },
    Sum { x: Var },
    Mean { x: Var },
    RowNorm { x: Var },
    Attention { q: Var, k: Var, v: Var, dims: AttnDims, probs: Vec<T> },
    SoftmaxXent { logits: Var, targets: Vec<usize>, weights: Vec<T>, probs: Vec<T> },
    InfoNce { d: Var, tau: T, norms: Vec<T>, probs: Vec<T> },
}

/// Batch layout of a fused attention call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnDims {
    pub batch: usize,
    pub heads: usize,
    pub q_len: usize,
    pub kv_len: usize,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward pass, indexed by [`Var`]. Only leaves keep
/// their gradient; intermediate buffers are consumed on the way down.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn acc<T: Scalar>(slot: &mut Option<Vec<T>>, n: usize) -> &mut Vec<T> {
    slot.get_or_insert_with(|| vec![T::zero(); n])
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Softmax probabilities cached by an attention node, laid out as
    /// `[batch, heads, q_len, kv_len]`.
    pub fn attention_probs(&self, v: Var) -> Option<(&[T], AttnDims)> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, dims, .. } => Some((probs, *dims)),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        assert_eq!(t.shape().len(), 2, "expected a matrix, got shape {:?}", t.shape());
        (t.shape()[0], t.shape()[1])
    }

    /// `a [m,k] * b [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(vec![m, n], out), Op::MatMul { a, b, bt: false }, rg)
    }

    /// `a [m,k] * b^T` with `b [n,k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims2(a);
        let (n, k2) = self.dims2(b);
        assert_eq!(k, k2, "matmul_bt inner dims");
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            1,
            k as isize,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(vec![m, n], out), Op::MatMul { a, b, bt: true }, rg)
    }

    /// Adds `b [C]` to every row of `x [.., C]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let c = self.value(x).cols();
        assert_eq!(self.value(b).numel(), c, "bias width");
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &bv) in row.iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        self.push(out, Op::AddBias { x, b }, rg)
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.numel(), tb.numel(), "elementwise op on {:?} and {:?}", ta.shape(), tb.shape());
        Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add { a, b }, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub { a, b }, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul { a, b }, rg)
    }

    /// Elementwise product with a constant (dropout masks, interpolation weights).
    pub fn mul_const(&mut self, x: Var, c: Vec<T>) -> Var {
        let t = self.value(x);
        assert_eq!(t.numel(), c.len(), "mul_const length");
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().zip(&c).map(|(&a, &b)| a * b).collect());
        let rg = self.rg(&[x]);
        self.push(out, Op::MulConst { x, c }, rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&a| a * c).collect());
        let rg = self.rg(&[x]);
        self.push(out, Op::Scale { x, c }, rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&a| a + c).collect());
        let rg = self.rg(&[x]);
        self.push(out, Op::AddScalar { x }, rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&a| a * a).collect());
        let rg = self.rg(&[x]);
        self.push(out, Op::Square { x }, rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (c, a3) = (T::lit(GELU_C), T::lit(GELU_A));
        let half = T::lit(0.5);
        let t = self.value(x);
        let out = Tensor::new(
            t.shape().to_vec(),
            t.data()
                .iter()
                .map(|&v| half * v * (T::one() + (c * (v + a3 * v * v * v)).tanh()))
                .collect(),
        );
        let rg = self.rg(&[x]);
        self.push(out, Op::Gelu { x }, rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let t = self.value(x);
        let out = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|&v| if v > T::zero() { v } else { v * slope }).collect(),
        );
        let rg = self.rg(&[x]);
        self.push(out, Op::LeakyRelu { x, slope }, rg)
    }

    /// Normalizes each row of `x [.., C]` then applies `gamma [C]`, `beta [C]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let cn = T::lit(c as f64);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        assert_eq!(g.len(), c, "layer norm gamma width");
        let mut xhat = Vec::with_capacity(t.numel());
        let mut rstd = Vec::with_capacity(t.rows());
        let mut out = Vec::with_capacity(t.numel());
        for row in t.data().chunks(c) {
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            Tensor::new(shape, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        )
    }

    /// Rows `idx` of `table [V, C]`, giving `[idx.len(), C]`.
    pub fn gather(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let t = self.value(table);
        let c = t.cols();
        let v = t.rows();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            assert!(i < v, "gather index {i} out of {v} rows");
            out.extend_from_slice(t.row(i));
        }
        let rg = self.rg(&[table]);
        self.push(Tensor::new(vec![idx.len(), c], out), Op::Gather { table, idx }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let out = self.value(x).clone().reshaped(shape);
        let rg = self.rg(&[x]);
        self.push(out, Op::Reshape { x }, rg)
    }

    /// `x [B*group, C] -> [B, C]`, `out[b] = sum_r weights[r] * x[b*group + r]`
    /// with one weight per input row.
    pub fn group_sum(&mut self, x: Var, group: usize, weights: Vec<T>) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let rows = t.rows();
        assert!(group > 0 && rows.is_multiple_of(group), "group size {group} does not divide {rows}");
        assert_eq!(weights.len(), rows, "one weight per row");
        let b = rows / group;
        let mut out = vec![T::zero(); b * c];
        for r in 0..rows {
            let w = weights[r];
            let dst = &mut out[(r / group) * c..(r / group + 1) * c];
            for (o, &v) in dst.iter_mut().zip(t.row(r)) {
                *o += w * v;
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::new(vec![b, c], out), Op::GroupSum { x, group, weights }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().copied().sum::<T>() / T::lit(t.numel() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean { x }, rg)
    }

    /// Euclidean norm of each row, `[R, 1]`.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out: Vec<T> = (0..t.rows())
            .map(|r| t.row(r).iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(vec![t.rows(), 1], out), Op::RowNorm { x }, rg)
    }

    /// Scaled dot-product attention with `heads` heads. `q` is
    /// `[batch*q_len, D]`, `k` and `v` are `[batch*kv_len, D]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, dims: AttnDims) -> Var {
        let AttnDims {
            batch,
            heads,
            q_len,
            kv_len,
        } = dims;
        let d = self.value(q).cols();
        assert_eq!(d % heads, 0, "model width {d} not divisible by {heads} heads");
        assert_eq!(self.value(q).rows(), batch * q_len, "query rows");
        assert_eq!(self.value(k).rows(), batch * kv_len, "key rows");
        assert_eq!(self.value(v).rows(), batch * kv_len, "value rows");
        let dh = d / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![T::zero(); batch * heads * q_len * kv_len];
        let mut out = vec![T::zero(); batch * q_len * d];
        let mut scores = vec![T::zero(); kv_len];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..q_len {
                    let qi = &qd[(b * q_len + i) * d + off..][..dh];
                    let mut mx = T::neg_infinity();
                    for (j, s) in scores.iter_mut().enumerate() {
                        let kj = &kd[(b * kv_len + j) * d + off..][..dh];
                        *s = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum::<T>() * scale;
                        mx = mx.max(*s);
                    }
                    let mut z = T::zero();
                    for s in scores.iter_mut() {
                        *s = (*s - mx).exp();
                        z += *s;
                    }
                    let p = &mut probs[((b * heads + h) * q_len + i) * kv_len..][..kv_len];
                    let o = &mut out[(b * q_len + i) * d + off..][..dh];
                    for j in 0..kv_len {
                        p[j] = scores[j] / z;
                        let vj = &vd[(b * kv_len + j) * d + off..][..dh];
                        for (oo, &vv) in o.iter_mut().zip(vj) {
                            *oo += p[j] * vv;
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[q, k, v]);
        self.push(
            Tensor::new(vec![batch * q_len, d], out),
            Op::Attention { q, k, v, dims, probs },
            rg,
        )
    }

    /// `sum_r weights[r] * -log softmax(logits[r])[targets[r]]` over rows of
    /// `logits [R, C]`. Rows with zero weight still get probabilities but
    /// contribute nothing.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<usize>, weights: Vec<T>) -> Var {
        let t = self.value(logits);
        let (r, c) = (t.rows(), t.cols());
        assert_eq!(targets.len(), r, "one target per row");
        assert_eq!(weights.len(), r, "one weight per row");
        let mut probs = vec![T::zero(); r * c];
        let mut loss = T::zero();
        for row in 0..r {
            let x = t.row(row);
            let mx = x.iter().copied().fold(T::neg_infinity(), T::max);
            let p = &mut probs[row * c..(row + 1) * c];
            let mut z = T::zero();
            for (pp, &xx) in p.iter_mut().zip(x) {
                *pp = (xx - mx).exp();
                z += *pp;
            }
            for pp in p.iter_mut() {
                *pp /= z;
            }
            let tgt = targets[row];
            assert!(tgt < c, "target class {tgt} out of {c}");
            if weights[row] != T::zero() {
                // log-sum-exp form keeps the loss finite for saturated rows
                loss += weights[row] * (z.ln() + mx - x[tgt]);
            }
        }
        let rg = self.rg(&[logits]);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets,
                weights,
                probs,
            },
            rg,
        )
    }

    /// InfoNCE over `d [2m, D]`: row `i` is paired with row `(i + m) mod 2m`;
    /// every other row is a negative. Mean over the `2m` anchors of
    /// `-log(exp(s_ip/tau) / sum_{k != i} exp(s_ik/tau))` with cosine `s`.
    pub fn info_nce(&mut self, d: Var, tau: T) -> Var {
        let t = self.value(d);
        let (n, dim) = (t.rows(), t.cols());
        assert!(n >= 2 && n % 2 == 0, "InfoNCE needs an even number (>= 2) of rows, got {n}");
        let m = n / 2;
        let tiny = T::lit(1e-12);
        let norms: Vec<T> = (0..n)
            .map(|i| t.row(i).iter().map(|&v| v * v).sum::<T>().sqrt().max(tiny))
            .collect();
        let unit: Vec<T> = (0..n * dim).map(|e| t.data()[e] / norms[e / dim]).collect();
        let mut sim = vec![T::zero(); n * n];
        T::gemm(
            n,
            dim,
            n,
            T::one(),
            &unit,
            dim as isize,
            1,
            &unit,
            1,
            dim as isize,
            T::zero(),
            &mut sim,
            n as isize,
            1,
        );
        let mut probs = vec![T::zero(); n * n];
        let mut loss = T::zero();
        for i in 0..n {
            let pos = (i + m) % n;
            let row = &sim[i * n..(i + 1) * n];
            let mx = (0..n).filter(|&k| k != i).map(|k| row[k] / tau).fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for k in (0..n).filter(|&k| k != i) {
                let e = (row[k] / tau - mx).exp();
                probs[i * n + k] = e;
                z += e;
            }
            for k in (0..n).filter(|&k| k != i) {
                probs[i * n + k] /= z;
            }
            loss += z.ln() + mx - row[pos] / tau;
        }
        loss /= T::lit(n as f64);
        let rg = self.rg(&[d]);
        self.push(Tensor::scalar(loss), Op::InfoNce { d, tau, norms, probs }, rg)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).numel(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            // pass-through ops hand their buffer on instead of copying it
            match node.op {
                Op::Leaf => grads[i] = Some(gy),
                Op::Reshape { x } | Op::AddScalar { x } => give(&mut grads[x.0], gy),
                Op::AddBias { x, b } => {
                    if self.wants(b) {
                        let c = self.numel(b);
                        let gb = acc(&mut grads[b.0], c);
                        for row in gy.chunks(c) {
                            add_into(gb, row);
                        }
                    }
                    if self.wants(x) {
                        give(&mut grads[x.0], gy);
                    }
                }
                Op::Add { a, b } => match (self.wants(a), self.wants(b)) {
                    (true, true) => {
                        give(&mut grads[a.0], gy.clone());
                        give(&mut grads[b.0], gy);
                    }
                    (true, false) => give(&mut grads[a.0], gy),
                    (false, true) => give(&mut grads[b.0], gy),
                    (false, false) => {}
                },
                _ => self.backprop(node, &gy, &mut grads),
            }
        }
        Gradients { grads }
    }

    fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].value.numel()
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop(&self, node: &Node<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, bt } => {
                let (m, k) = self.dims2(a);
                let n = node.value.cols();
                let (ad, bd) = (self.value(a).data(), self.value(b).data());
                if self.wants(a) {
                    let ga = acc(&mut grads[a.0], m * k);
                    // dA = dC * B^T (B is [k,n]) or dC * B (B is [n,k])
                    let (rsb, csb) = if bt { (k as isize, 1) } else { (1, n as isize) };
                    T::gemm(m, n, k, T::one(), gy, n as isize, 1, bd, rsb, csb, T::one(), ga, k as isize, 1);
                }
                if self.wants(b) {
                    let gb = acc(&mut grads[b.0], k * n);
                    if bt {
                        // dB [n,k] = dC^T * A
                        T::gemm(n, m, k, T::one(), gy, 1, n as isize, ad, k as isize, 1, T::one(), gb, k as isize, 1);
                    } else {
                        // dB [k,n] = A^T * dC
                        T::gemm(k, m, n, T::one(), ad, 1, k as isize, gy, n as isize, 1, T::one(), gb, n as isize, 1);
                    }
                }
            }
            &Op::AddBias { x, b } => {
                if self.wants(x) {
                    add_into(acc(&mut grads[x.0], gy.len()), gy);
                }
                if self.wants(b) {
                    let c = self.numel(b);
                    let gb = acc(&mut grads[b.0], c);
                    for row in gy.chunks(c) {
                        add_into(gb, row);
                    }
                }
            }
            &Op::Add { a, b } => {
                for v in [a, b] {
                    if self.wants(v) {
                        add_into(acc(&mut grads[v.0], gy.len()), gy);
                    }
                }
            }
            &Op::Sub { a, b } => {
                if self.wants(a) {
                    add_into(acc(&mut grads[a.0], gy.len()), gy);
                }
                if self.wants(b) {
                    for (g, &d) in acc(&mut grads[b.0], gy.len()).iter_mut().zip(gy) {
                        *g -= d;
                    }
                }
            }
            &Op::Mul { a, b } => {
                let (ad, bd) = (self.value(a).data(), self.value(b).data());
                if self.wants(a) {
                    for ((g, &d), &o) in acc(&mut grads[a.0], gy.len()).iter_mut().zip(gy).zip(bd) {
                        *g += d * o;
                    }
                }
                if self.wants(b) {
                    for ((g, &d), &o) in acc(&mut grads[b.0], gy.len()).iter_mut().zip(gy).zip(ad) {
                        *g += d * o;
                    }
                }
            }
            Op::MulConst { x, c } => {
                for ((g, &d), &cc) in acc(&mut grads[x.0], gy.len()).iter_mut().zip(gy).zip(c) {
                    *g += d * cc;
                }
            }
            &Op::Scale { x, c } => {
                for (g, &d) in acc(&mut grads[x.0], gy.len()).iter_mut().zip(gy) {
                    *g += d * c;
                }
            }
            &Op::AddScalar { x } => add_into(acc(&mut grads[x.0], gy.len()), gy),
            &Op::Square { x } => {
                let xd = self.value(x).data();
                let two = T::lit(2.0);
                for ((g, &d), &v) in acc(&mut grads[x.0], gy.len()).iter_mut().zip(gy).zip(xd) {
                    *g += two * v * d;
                }
            }
            &Op::Gelu { x } => {
                let xd = self.value(x).data();
                let (c, a3, half) = (T::lit(GELU_C), T::lit(GELU_A), T::lit(0.5));
                let three = T::lit(3.0);
                for ((g, &d), &v) in acc(&mut grads[x.0], gy.len()).iter_mut().zip(gy).zip(xd) {
                    let th = (c * (v + a3 * v * v * v)).tanh();
                    let dinner = c * (T::one() + three * a3 * v * v);
                    let dy = half * (T::one() + th) + half * v * (T::one() - th * th) * dinner;
                    *g += d * dy;
                }
            }
            &Op::LeakyRelu { x, slope } => {
                let xd = self.value(x).data();
                for ((g, &d), &v) in acc(&mut grads[x.0], gy.len()).iter_mut().zip(gy).zip(xd) {
                    *g += if v > T::zero() { d } else { d * slope };
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = self.numel(*gamma);
                let cn = T::lit(c as f64);
                let gd = self.value(*gamma).data();
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], gy.len());
                    for (r, &rs) in rstd.iter().enumerate() {
                        let dy = &gy[r * c..(r + 1) * c];
                        let xh = &xhat[r * c..(r + 1) * c];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            let dxh = dy[j] * gd[j];
                            m1 += dxh;
                            m2 += dxh * xh[j];
                        }
                        m1 /= cn;
                        m2 /= cn;
                        for j in 0..c {
                            gx[r * c + j] += rs * (dy[j] * gd[j] - m1 - xh[j] * m2);
                        }
                    }
                }
                if self.wants(*gamma) {
                    let gg = acc(&mut grads[gamma.0], c);
                    for (e, (&d, &h)) in gy.iter().zip(xhat).enumerate() {
                        gg[e % c] += d * h;
                    }
                }
                if self.wants(*beta) {
                    let gb = acc(&mut grads[beta.0], c);
                    for row in gy.chunks(c) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Gather { table, idx } => {
                let c = self.value(*table).cols();
                let gt = acc(&mut grads[table.0], self.numel(*table));
                for (r, &i) in idx.iter().enumerate() {
                    add_into(&mut gt[i * c..(i + 1) * c], &gy[r * c..(r + 1) * c]);
                }
            }
            &Op::Reshape { x } => add_into(acc(&mut grads[x.0], gy.len()), gy),
            Op::GroupSum { x, group, weights } => {
                let c = node.value.cols();
                let gx = acc(&mut grads[x.0], weights.len() * c);
                for (r, &w) in weights.iter().enumerate() {
                    let src = &gy[(r / group) * c..(r / group + 1) * c];
                    for (g, &d) in gx[r * c..(r + 1) * c].iter_mut().zip(src) {
                        *g += w * d;
                    }
                }
            }
            &Op::Sum { x } => {
                for g in acc(&mut grads[x.0], self.numel(x)).iter_mut() {
                    *g += gy[0];
                }
            }
            &Op::Mean { x } => {
                let n = self.numel(x);
                let d = gy[0] / T::lit(n as f64);
                for g in acc(&mut grads[x.0], n).iter_mut() {
                    *g += d;
                }
            }
            &Op::RowNorm { x } => {
                let t = self.value(x);
                let c = t.cols();
                let gx = acc(&mut grads[x.0], t.numel());
                for (r, &norm) in node.value.data().iter().enumerate() {
                    if norm > T::zero() {
                        for j in 0..c {
                            gx[r * c + j] += gy[r] * t.data()[r * c + j] / norm;
                        }
                    }
                }
            }
            Op::Attention { q, k, v, dims, probs } => self.attention_backward(*q, *k, *v, *dims, probs, gy, grads),
            Op::SoftmaxXent {
                logits,
                targets,
                weights,
                probs,
            } => {
                let c = self.value(*logits).cols();
                let gl = acc(&mut grads[logits.0], probs.len());
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    if w == T::zero() {
                        continue;
                    }
                    let s = gy[0] * w;
                    for j in 0..c {
                        gl[r * c + j] += s * probs[r * c + j];
                    }
                    gl[r * c + t] -= s;
                }
            }
            Op::InfoNce { d, tau, norms, probs } => {
                let t = self.value(*d);
                let (n, dim) = (t.rows(), t.cols());
                let m = n / 2;
                let unit: Vec<T> = (0..n * dim).map(|e| t.data()[e] / norms[e / dim]).collect();
                // dL/dS_ik for the similarity matrix, S symmetric
                let coef = gy[0] / (T::lit(n as f64) * *tau);
                let mut gs = vec![T::zero(); n * n];
                for i in 0..n {
                    for k in 0..n {
                        if k != i {
                            gs[i * n + k] = coef * probs[i * n + k];
                        }
                    }
                    gs[i * n + (i + m) % n] -= coef;
                }
                // dL/du_i = sum_k (G_ik + G_ki) u_k
                let mut sym = vec![T::zero(); n * n];
                for i in 0..n {
                    for k in 0..n {
                        sym[i * n + k] = gs[i * n + k] + gs[k * n + i];
                    }
                }
                let mut gu = vec![T::zero(); n * dim];
                T::gemm(n, n, dim, T::one(), &sym, n as isize, 1, &unit, dim as isize, 1, T::zero(), &mut gu, dim as isize, 1);
                let gd = acc(&mut grads[d.0], n * dim);
                for i in 0..n {
                    let u = &unit[i * dim..(i + 1) * dim];
                    let g = &gu[i * dim..(i + 1) * dim];
                    let proj = u.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
                    for j in 0..dim {
                        gd[i * dim + j] += (g[j] - u[j] * proj) / norms[i];
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        dims: AttnDims,
        probs: &[T],
        gy: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let AttnDims {
            batch,
            heads,
            q_len,
            kv_len,
        } = dims;
        let d = self.value(q).cols();
        let dh = d / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut gq = vec![T::zero(); qd.len()];
        let mut gk = vec![T::zero(); kd.len()];
        let mut gv = vec![T::zero(); vd.len()];
        let mut dp = vec![T::zero(); kv_len];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..q_len {
                    let p = &probs[((b * heads + h) * q_len + i) * kv_len..][..kv_len];
                    let go = &gy[(b * q_len + i) * d + off..][..dh];
                    let mut dot = T::zero();
                    for j in 0..kv_len {
                        let vrow = (b * kv_len + j) * d + off;
                        let vj = &vd[vrow..vrow + dh];
                        dp[j] = go.iter().zip(vj).map(|(&x, &y)| x * y).sum::<T>();
                        dot += dp[j] * p[j];
                        for (g, &o) in gv[vrow..vrow + dh].iter_mut().zip(go) {
                            *g += p[j] * o;
                        }
                    }
                    let qrow = (b * q_len + i) * d + off;
                    for j in 0..kv_len {
                        let ds = p[j] * (dp[j] - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        let krow = (b * kv_len + j) * d + off;
                        for e in 0..dh {
                            gq[qrow + e] += ds * kd[krow + e];
                            gk[krow + e] += ds * qd[qrow + e];
                        }
                    }
                }
            }
        }
        for (var, g) in [(q, gq), (k, gk), (v, gv)] {
            if self.wants(var) {
                add_into(acc(&mut grads[var.0], g.len()), &g);
            }
        }
    }
}

fn give<T: Scalar>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(dst) => add_into(dst, &g),
        None => *slot = Some(g),
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{check_gradients, ParamStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn store(shapes: &[Vec<usize>], seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        for (i, s) in shapes.iter().enumerate() {
            ps.add(format!("p{i}"), rand_tensor(&mut rng, s.clone()));
        }
        ps
    }

    fn assert_grads(ps: &ParamStore<f64>, f: impl FnMut(&mut Graph<f64>, &crate::autograd::Bound) -> Var) {
        let r = check_gradients(ps, 1e-5, f);
        assert!(r.worst < 1e-6, "{:?}", r.per_param);
    }

    // Fixed random projection so every op output feeds a scalar non-trivially.
    fn probe(g: &mut Graph<f64>, x: Var, seed: u64) -> Var {
        let n = g.value(x).numel();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = g.mul_const(x, w);
        g.sum(y)
    }

    #[test]
    fn matmul_forward_and_grads() {
        let ps = store(&[vec![3, 4], vec![4, 5], vec![2, 5]], 1);
        let mut g = Graph::new();
        let b = ps.bind(&mut g, false);
        let ids: Vec<_> = ps.ids().collect();
        let c = g.matmul(b.var(ids[0]), b.var(ids[1]));
        let a = ps.get(ids[0]).data();
        let bb = ps.get(ids[1]).data();
        let want: f64 = (0..4).map(|k| a[4 + k] * bb[k * 5 + 2]).sum();
        assert!((g.value(c).data()[5 + 2] - want).abs() < 1e-12);
        assert_grads(&ps, |g, b| {
            let x = g.matmul(b.var(ids[0]), b.var(ids[1]));
            let y = g.matmul_bt(x, b.var(ids[2]));
            probe(g, y, 7)
        });
    }

    #[test]
    fn elementwise_grads() {
        let ps = store(&[vec![2, 3], vec![2, 3], vec![3]], 2);
        let ids: Vec<_> = ps.ids().collect();
        assert_grads(&ps, |g, b| {
            let (x, y) = (b.var(ids[0]), b.var(ids[1]));
            let s = g.add(x, y);
            let d = g.sub(s, y);
            let m = g.mul(d, y);
            let q = g.square(m);
            let t = g.add_bias(q, b.var(ids[2]));
            let t = g.scale(t, 0.7);
            let t = g.add_scalar(t, 0.3);
            let u = g.gelu(t);
            let v = g.leaky_relu(u, 0.2);
            let r = g.reshape(v, vec![3, 2]);
            let p = probe(g, r, 3);
            let mean = g.mean(x);
            g.add(p, mean)
        });
    }

    #[test]
    fn layer_norm_grads_and_stats() {
        let ps = store(&[vec![4, 6], vec![6], vec![6]], 3);
        let ids: Vec<_> = ps.ids().collect();
        assert_grads(&ps, |g, b| {
            let y = g.layer_norm(b.var(ids[0]), b.var(ids[1]), b.var(ids[2]), 1e-5);
            probe(g, y, 4)
        });
        let mut g = Graph::new();
        let x = g.input(ps.get(ids[0]).clone());
        let one = g.input(Tensor::full(vec![6], 1.0));
        let zero = g.input(Tensor::zeros(vec![6]));
        let y = g.layer_norm(x, one, zero, 0.0);
        for r in 0..4 {
            let row = g.value(y).row(r);
            let mean: f64 = row.iter().sum::<f64>() / 6.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gather_group_sum_row_norm_grads() {
        let ps = store(&[vec![5, 3]], 4);
        let id = ps.ids().next().unwrap();
        assert_grads(&ps, |g, b| {
            let e = g.gather(b.var(id), vec![0, 3, 3, 1, 4, 0]);
            let p = g.group_sum(e, 3, vec![0.5, 1.0, -2.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
            let n = g.row_norm(p);
            let s = g.sum(n);
            let q = probe(g, p, 5);
            g.add(s, q)
        });
    }

    #[test]
    fn attention_grads_and_row_sums() {
        let dims = AttnDims {
            batch: 2,
            heads: 2,
            q_len: 3,
            kv_len: 4,
        };
        let ps = store(&[vec![6, 4], vec![8, 4], vec![8, 4]], 5);
        let ids: Vec<_> = ps.ids().collect();
        assert_grads(&ps, |g, b| {
            let o = g.attention(b.var(ids[0]), b.var(ids[1]), b.var(ids[2]), dims);
            probe(g, o, 6)
        });
        let mut g = Graph::new();
        let b = ps.bind(&mut g, false);
        let o = g.attention(b.var(ids[0]), b.var(ids[1]), b.var(ids[2]), dims);
        let (p, _) = g.attention_probs(o).unwrap();
        for row in p.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_values_and_grads() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(vec![3, 6]));
        let l = g.softmax_cross_entropy(x, vec![0, 2, 5], vec![1.0, 1.0, 0.0]);
        assert!((g.value(l).data()[0] - 2.0 * 6f64.ln()).abs() < 1e-12);

        let ps = store(&[vec![4, 5]], 6);
        let id = ps.ids().next().unwrap();
        assert_grads(&ps, |g, b| g.softmax_cross_entropy(b.var(id), vec![1, 0, 4, 2], vec![0.5, 1.0, 0.0, 2.0]));
    }

    #[test]
    fn info_nce_closed_forms() {
        let mut g = Graph::<f64>::new();
        let d = g.input(Tensor::new(vec![2, 3], vec![1.0, 2.0, 0.0, -3.0, 0.5, 1.0]));
        let l = g.info_nce(d, 0.07);
        assert_eq!(g.value(l).data()[0], 0.0);

        let d = g.input(Tensor::from_fn(vec![4, 3], |i| [0.3, -1.0, 2.0][i % 3]));
        let l = g.info_nce(d, 0.07);
        assert!((g.value(l).data()[0] - 3f64.ln()).abs() < 1e-9);

        // positives aligned, negatives orthogonal
        let e = |i: usize| Tensor::from_fn(vec![1, 2], move |j| if i == j { 1.0 } else { 0.0 });
        let rows: Vec<f64> = [e(0), e(1), e(0), e(1)].iter().flat_map(|t| t.data().to_vec()).collect();
        let d = g.input(Tensor::new(vec![4, 2], rows));
        let l = g.info_nce(d, 0.07);
        let tau: f64 = 0.07;
        let want = -((1.0 / tau).exp() / ((1.0 / tau).exp() + 2.0)).ln();
        assert!((g.value(l).data()[0] - want).abs() < 1e-9);
    }

    #[test]
    fn info_nce_grads() {
        let ps = store(&[vec![6, 4]], 8);
        let id = ps.ids().next().unwrap();
        assert_grads(&ps, |g, b| g.info_nce(b.var(id), 0.5));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.input(Tensor::full(vec![2], 1.0));
        let w = g.leaf(Tensor::full(vec![2], 2.0));
        let y = g.mul(c, w);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(w).unwrap(), &[1.0, 1.0]);
    }
}
