use super::kernels::{self, sigmoid};
use super::{numel, Real, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node<F> {
    shape: Vec<usize>,
    value: Vec<F>,
    op: Op<F>,
    requires_grad: bool,
    grad: Option<Vec<F>>,
}

struct LstmCache<F> {
    /// Post-activation gates, `T x 4H`, laid out `[i | f | g | o]`.
    gates: Vec<F>,
    cells: Vec<F>,
    tanh_cells: Vec<F>,
}

enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Prelu(Var, Var),
    Mask(Var, Vec<F>),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    VarianceAxis(Var, usize),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    Slice { x: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
    Broadcast(Var),
    Conv1d { x: Var, w: Var, b: Var, k: usize, cols: Vec<F> },
    Lstm { x: Var, wx: Var, wh: Var, b: Var, h0: Option<Var>, c0: Option<Var>, cache: Option<LstmCache<F>> },
    MaxPool { x: Var, argmax: Vec<usize> },
    InstanceNorm { x: Var, inv_std: Vec<F> },
    Mse(Var, Var),
    CrossEntropy { logits: Var, target: usize, probs: Vec<F> },
}

/// Computation graph for one forward/backward pass.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
pub struct Graph<F = f32> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
fn axis_view(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return shape_err(format!("axis {axis} invalid for shape {shape:?}"));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return shape_err(format!("cannot broadcast {a:?} with {b:?}")),
        };
    }
    Ok(out)
}

/// For each element of `out_shape`, the flat index of the broadcast source.
fn broadcast_index(src: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for i in (0..src.len()).rev() {
        strides[i + offset] = if src[i] == 1 { 0 } else { s };
        s *= src[i];
    }
    let n = numel(out_shape);
    let mut idx = vec![0usize; n];
    let mut counter = vec![0usize; rank];
    let mut cur = 0usize;
    for slot in idx.iter_mut() {
        *slot = cur;
        for d in (0..rank).rev() {
            counter[d] += 1;
            cur += strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            cur -= strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    idx
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<F>, op: Op<F>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant leaf; never receives a gradient.
    pub fn input(&mut self, t: Tensor<F>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Trainable leaf; receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, t: Tensor<F>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, true)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor<F> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node invariant")
    }

    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            &[r, c] => Ok((r, c)),
            s => shape_err(format!("expected a matrix, got {s:?}")),
        }
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return shape_err(format!("matmul inner dimensions {m}x{k} * {k2}x{n}"));
        }
        let mut out = vec![F::zero(); m * n];
        kernels::gemm(self.value(a), self.value(b), &mut out, m, k, n, false);
        let rg = self.tracked(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x)?;
        let mut out = vec![F::zero(); r * c];
        kernels::transpose(self.value(x), r, c, &mut out);
        let rg = self.tracked(&[x]);
        Ok(self.push(vec![c, r], out, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != numel(self.shape(x)) || shape.contains(&0) {
            return shape_err(format!("cannot reshape {:?} into {shape:?}", self.shape(x)));
        }
        let v = self.value(x).to_vec();
        let rg = self.tracked(&[x]);
        Ok(self.push(shape.to_vec(), v, Op::Reshape(x), rg))
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = broadcast_shape(self.shape(x), shape)?;
        if out != shape {
            return shape_err(format!("cannot broadcast {:?} to {shape:?}", self.shape(x)));
        }
        let idx = broadcast_index(self.shape(x), shape);
        let src = self.value(x);
        let v = idx.iter().map(|&i| src[i]).collect();
        let rg = self.tracked(&[x]);
        Ok(self.push(shape.to_vec(), v, Op::Broadcast(x), rg))
    }

    // ---- elementwise ----

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<(Vec<usize>, Vec<F>)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            let v = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
            return Ok((sa.to_vec(), v));
        }
        let out = broadcast_shape(sa, sb)?;
        let ia = broadcast_index(sa, &out);
        let ib = broadcast_index(sb, &out);
        let (va, vb) = (self.value(a), self.value(b));
        let v = ia.iter().zip(&ib).map(|(&i, &j)| f(va[i], vb[j])).collect();
        Ok((out, v))
    }

    /// Broadcasting `a + b`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v) = self.binary(a, b, |x, y| x + y)?;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(s, v, Op::Add(a, b), rg))
    }

    /// Broadcasting `a - b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v) = self.binary(a, b, |x, y| x - y)?;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(s, v, Op::Sub(a, b), rg))
    }

    /// Broadcasting elementwise `a * b`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v) = self.binary(a, b, |x, y| x * y)?;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(s, v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, k: F) -> Var {
        let v = self.value(x).iter().map(|&e| e * k).collect();
        let s = self.shape(x).to_vec();
        let rg = self.tracked(&[x]);
        self.push(s, v, Op::Scale(x, k), rg)
    }

    /// `x + c` for a constant `c`.
    pub fn offset(&mut self, x: Var, c: F) -> Var {
        let v = self.value(x).iter().map(|&e| e + c).collect();
        let s = self.shape(x).to_vec();
        let rg = self.tracked(&[x]);
        self.push(s, v, Op::Offset(x), rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let v = self.value(x).iter().map(|&e| f(e)).collect();
        let s = self.shape(x).to_vec();
        let rg = self.tracked(&[x]);
        self.push(s, v, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, F::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, F::exp, Op::Exp(x))
    }

    /// Natural log; inputs must be positive.
    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, F::ln, Op::Ln(x))
    }

    /// Parametric ReLU with a single learnable slope `eta` (shape `[1]`).
    pub fn prelu(&mut self, x: Var, eta: Var) -> Result<Var> {
        if numel(self.shape(eta)) != 1 {
            return shape_err(format!("PReLU slope must be a scalar, got {:?}", self.shape(eta)));
        }
        let e = self.value(eta)[0];
        let v = self
            .value(x)
            .iter()
            .map(|&s| if s >= F::zero() { s } else { e * s })
            .collect();
        let s = self.shape(x).to_vec();
        let rg = self.tracked(&[x, eta]);
        Ok(self.push(s, v, Op::Prelu(x, eta), rg))
    }

    /// Multiplies by a constant mask of the same shape (used by dropout).
    pub fn mask(&mut self, x: Var, mask: Vec<F>) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return shape_err("mask length differs from input");
        }
        let v = self.value(x).iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let s = self.shape(x).to_vec();
        let rg = self.tracked(&[x]);
        Ok(self.push(s, v, Op::Mask(x, mask), rg))
    }

    // ---- reductions ----

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().copied().sum();
        let rg = self.tracked(&[x]);
        self.push(vec![1], vec![v], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = F::lit(self.value(x).len() as f64);
        let v = self.value(x).iter().copied().sum::<F>() / n;
        let rg = self.tracked(&[x]);
        self.push(vec![1], vec![v], Op::Mean(x), rg)
    }

    fn reduce_axis(&mut self, x: Var, axis: usize, f: impl Fn(&[F]) -> F) -> Result<(Vec<usize>, Vec<F>)> {
        let (outer, len, inner) = axis_view(self.shape(x), axis)?;
        let src = self.value(x);
        let mut out = Vec::with_capacity(outer * inner);
        let mut buf = vec![F::zero(); len];
        for o in 0..outer {
            for i in 0..inner {
                for (l, b) in buf.iter_mut().enumerate() {
                    *b = src[(o * len + l) * inner + i];
                }
                out.push(f(&buf));
            }
        }
        let mut shape = self.shape(x).to_vec();
        shape[axis] = 1;
        Ok((shape, out))
    }

    /// Sum along `axis`, keeping it with size 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (s, v) = self.reduce_axis(x, axis, |b| b.iter().copied().sum())?;
        let rg = self.tracked(&[x]);
        Ok(self.push(s, v, Op::SumAxis(x, axis), rg))
    }

    /// Mean along `axis`, keeping it with size 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (s, v) = self.reduce_axis(x, axis, |b| {
            b.iter().copied().sum::<F>() / F::lit(b.len() as f64)
        })?;
        let rg = self.tracked(&[x]);
        Ok(self.push(s, v, Op::MeanAxis(x, axis), rg))
    }

    /// Population variance along `axis`, keeping it with size 1.
    pub fn variance_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (s, v) = self.reduce_axis(x, axis, |b| {
            let n = F::lit(b.len() as f64);
            let mu = b.iter().copied().sum::<F>() / n;
            b.iter().map(|&e| (e - mu) * (e - mu)).sum::<F>() / n
        })?;
        let rg = self.tracked(&[x]);
        Ok(self.push(s, v, Op::VarianceAxis(x, axis), rg))
    }

    /// Softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, len, inner) = axis_view(self.shape(x), axis)?;
        let src = self.value(x);
        let mut out = vec![F::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let max = (0..len).map(|l| src[at(l)]).fold(F::neg_infinity(), F::max);
                let mut total = F::zero();
                for l in 0..len {
                    let e = (src[at(l)] - max).exp();
                    out[at(l)] = e;
                    total += e;
                }
                for l in 0..len {
                    out[at(l)] /= total;
                }
            }
        }
        let s = self.shape(x).to_vec();
        let rg = self.tracked(&[x]);
        Ok(self.push(s, out, Op::Softmax(x, axis), rg))
    }

    // ---- structure ----

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        let (outer, _, inner) = axis_view(&base, axis)?;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len()
                || s.iter().enumerate().any(|(d, &n)| d != axis && n != base[d])
            {
                return shape_err(format!("concat shapes {base:?} and {s:?} along axis {axis}"));
            }
            total += s[axis];
        }
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis];
                out.extend_from_slice(&self.value(p)[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.tracked(parts);
        Ok(self.push(shape, out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (outer, full, inner) = axis_view(self.shape(x), axis)?;
        if len == 0 || start + len > full {
            return shape_err(format!("slice {start}..{} of axis length {full}", start + len));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape(x).to_vec();
        shape[axis] = len;
        let rg = self.tracked(&[x]);
        Ok(self.push(shape, out, Op::Slice { x, axis, start }, rg))
    }

    // ---- fused layers ----

    /// Same-padded, stride-1 cross-correlation of `x (T x Cin)` with `w` of
    /// shape `[k, Cin, Cout]` plus bias `b [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (t, cin) = self.dims2(x)?;
        let (k, wcin, cout) = match self.shape(w) {
            &[k, ci, co] => (k, ci, co),
            s => return shape_err(format!("conv weight must be [k, Cin, Cout], got {s:?}")),
        };
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv kernel width {k} must be odd")));
        }
        if wcin != cin {
            return shape_err(format!("conv expects {wcin} input channels, got {cin}"));
        }
        if self.shape(b) != [cout] {
            return shape_err(format!("conv bias must be [{cout}], got {:?}", self.shape(b)));
        }
        let cols = kernels::im2col(self.value(x), t, cin, k);
        let mut out = vec![F::zero(); t * cout];
        kernels::gemm(&cols, self.value(w), &mut out, t, k * cin, cout, false);
        let bias = self.value(b);
        for row in out.chunks_mut(cout) {
            for (o, &bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let rg = self.tracked(&[x, w, b]);
        let cols = if self.tracked(&[w]) { cols } else { Vec::new() };
        Ok(self.push(vec![t, cout], out, Op::Conv1d { x, w, b, k, cols }, rg))
    }

    /// LSTM over `x (T x D)` with input weights `wx (D x 4H)`, recurrent
    /// weights `wh (H x 4H)` and bias `b (4H)`. Gate columns are ordered
    /// input, forget, cell, output. Missing initial states are zero.
    /// Returns every hidden state, `T x H`.
    pub fn lstm(&mut self, x: Var, wx: Var, wh: Var, b: Var, h0: Option<Var>, c0: Option<Var>) -> Result<Var> {
        let (t, d) = self.dims2(x)?;
        let (wd, g4) = self.dims2(wx)?;
        if g4 % 4 != 0 || wd != d {
            return shape_err(format!("LSTM input weights {wd}x{g4} for input width {d}"));
        }
        let h = g4 / 4;
        if self.shape(wh) != [h, 4 * h] {
            return shape_err(format!("LSTM recurrent weights must be {h}x{}, got {:?}", 4 * h, self.shape(wh)));
        }
        if self.shape(b) != [4 * h] {
            return shape_err(format!("LSTM bias must be [{}], got {:?}", 4 * h, self.shape(b)));
        }
        for s in [h0, c0].into_iter().flatten() {
            if numel(self.shape(s)) != h {
                return shape_err(format!("LSTM initial state must have {h} entries"));
            }
        }
        let mut z = vec![F::zero(); t * 4 * h];
        kernels::gemm(self.value(x), self.value(wx), &mut z, t, d, 4 * h, false);
        let bias = self.value(b);
        for row in z.chunks_mut(4 * h) {
            for (o, &bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let whv = self.value(wh);
        let mut hs = vec![F::zero(); t * h];
        let mut cells = vec![F::zero(); t * h];
        let mut tanh_cells = vec![F::zero(); t * h];
        let mut h_prev = h0.map_or_else(|| vec![F::zero(); h], |v| self.value(v).to_vec());
        let mut c_prev = c0.map_or_else(|| vec![F::zero(); h], |v| self.value(v).to_vec());
        for step in 0..t {
            let zr = &mut z[step * 4 * h..(step + 1) * 4 * h];
            kernels::gemm(&h_prev, whv, zr, 1, h, 4 * h, true);
            for j in 0..h {
                let ig = sigmoid(zr[j]);
                let fg = sigmoid(zr[h + j]);
                let gg = zr[2 * h + j].tanh();
                let og = sigmoid(zr[3 * h + j]);
                zr[j] = ig;
                zr[h + j] = fg;
                zr[2 * h + j] = gg;
                zr[3 * h + j] = og;
                let c = fg * c_prev[j] + ig * gg;
                let tc = c.tanh();
                cells[step * h + j] = c;
                tanh_cells[step * h + j] = tc;
                hs[step * h + j] = og * tc;
            }
            h_prev.copy_from_slice(&hs[step * h..(step + 1) * h]);
            c_prev.copy_from_slice(&cells[step * h..(step + 1) * h]);
        }
        let mut deps = vec![x, wx, wh, b];
        deps.extend(h0);
        deps.extend(c0);
        let rg = self.tracked(&deps);
        let cache = rg.then_some(LstmCache {
            gates: z,
            cells,
            tanh_cells,
        });
        Ok(self.push(vec![t, h], hs, Op::Lstm { x, wx, wh, b, h0, c0, cache }, rg))
    }

    /// Non-overlapping max pool along time; a ragged tail is padded with -inf.
    pub fn maxpool1d(&mut self, x: Var, pool: usize) -> Result<Var> {
        let (t, c) = self.dims2(x)?;
        if pool == 0 {
            return Err(Error::Config("pool size must be positive".into()));
        }
        let to = t.div_ceil(pool);
        let src = self.value(x);
        let mut out = vec![F::neg_infinity(); to * c];
        let mut argmax = vec![0usize; to * c];
        for o in 0..to {
            for r in o * pool..((o + 1) * pool).min(t) {
                for j in 0..c {
                    let v = src[r * c + j];
                    if v > out[o * c + j] || r == o * pool {
                        out[o * c + j] = v;
                        argmax[o * c + j] = r * c + j;
                    }
                }
            }
        }
        let rg = self.tracked(&[x]);
        Ok(self.push(vec![to, c], out, Op::MaxPool { x, argmax }, rg))
    }

    /// Per-channel standardisation over time of a `T x C` matrix.
    pub fn instance_norm(&mut self, x: Var, eps: F) -> Result<Var> {
        let (t, c) = self.dims2(x)?;
        let src = self.value(x);
        let n = F::lit(t as f64);
        let mut mean = vec![F::zero(); c];
        for row in src.chunks(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![F::zero(); c];
        for row in src.chunks(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v / n + eps).sqrt()).collect();
        let mut out = vec![F::zero(); t * c];
        for (orow, row) in out.chunks_mut(c).zip(src.chunks(c)) {
            for j in 0..c {
                orow[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let rg = self.tracked(&[x]);
        Ok(self.push(vec![t, c], out, Op::InstanceNorm { x, inv_std }, rg))
    }

    /// Mean squared error over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("mse of {:?} and {:?}", self.shape(a), self.shape(b)));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let n = F::lit(va.len() as f64);
        let v = va.iter().zip(vb).map(|(&x, &y)| (x - y) * (x - y)).sum::<F>() / n;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(vec![1], vec![v], Op::Mse(a, b), rg))
    }

    /// Softmax cross-entropy of a logit vector against a class index.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.value(logits);
        if target >= z.len() {
            return shape_err(format!("target class {target} with {} logits", z.len()));
        }
        let max = z.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = z.iter().map(|&v| (v - max).exp()).collect();
        let total: F = exps.iter().copied().sum();
        let probs: Vec<F> = exps.iter().map(|&e| e / total).collect();
        let loss = -(z[target] - max - total.ln());
        let rg = self.tracked(&[logits]);
        Ok(self.push(vec![1], vec![loss], Op::CrossEntropy { logits, target, probs }, rg))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar `root`. Afterwards every node that tracks
    /// gradients holds `d root / d node` (zeros when unreachable).
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if numel(self.shape(root)) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![F::one()]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = node
                .requires_grad
                .then(|| g.unwrap_or_else(|| vec![F::zero(); node.value.len()]));
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        let shp = |v: Var| self.nodes[v.0].shape.as_slice();
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &dyn Fn(&mut [F])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![F::zero(); self.nodes[v.0].value.len()]);
            f(slot);
        };
        let reduce_bcast = |src: &[usize], out: &[usize], gv: &[F], dst: &mut [F], scale: &dyn Fn(usize) -> F| {
            if src == out {
                for (k, (d, &gg)) in dst.iter_mut().zip(gv).enumerate() {
                    *d += gg * scale(k);
                }
            } else {
                for (k, &j) in broadcast_index(src, out).iter().enumerate() {
                    dst[j] += gv[k] * scale(k);
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (shp(*a)[0], shp(*a)[1]);
                let n = shp(*b)[1];
                acc(*a, &|d| kernels::gemm_nt(g, val(*b), d, m, n, k, true));
                acc(*b, &|d| kernels::gemm_tn(val(*a), g, d, k, m, n, true));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -F::one() } else { F::one() };
                acc(*a, &|d| reduce_bcast(shp(*a), &node.shape, g, d, &|_| F::one()));
                acc(*b, &|d| reduce_bcast(shp(*b), &node.shape, g, d, &|_| sign));
            }
            Op::Mul(a, b) => {
                let (sa, sb) = (shp(*a), shp(*b));
                let ia = (sa != node.shape.as_slice()).then(|| broadcast_index(sa, &node.shape));
                let ib = (sb != node.shape.as_slice()).then(|| broadcast_index(sb, &node.shape));
                let (va, vb) = (val(*a), val(*b));
                let at_a = |k: usize| ia.as_ref().map_or_else(|| va[k], |ix| va[ix[k]]);
                let at_b = |k: usize| ib.as_ref().map_or_else(|| vb[k], |ix| vb[ix[k]]);
                acc(*a, &|d| reduce_bcast(sa, &node.shape, g, d, &at_b));
                acc(*b, &|d| reduce_bcast(sb, &node.shape, g, d, &at_a));
            }
            Op::Scale(x, k) => acc(*x, &|d| d.iter_mut().zip(g).for_each(|(d, &gg)| *d += gg * *k)),
            Op::Offset(x) | Op::Reshape(x) => acc(*x, &|d| d.iter_mut().zip(g).for_each(|(d, &gg)| *d += gg)),
            Op::Broadcast(x) => acc(*x, &|d| reduce_bcast(shp(*x), &node.shape, g, d, &|_| F::one())),
            Op::Sigmoid(x) => acc(*x, &|d| {
                for ((d, &gg), &s) in d.iter_mut().zip(g).zip(y) {
                    *d += gg * s * (F::one() - s);
                }
            }),
            Op::Tanh(x) => acc(*x, &|d| {
                for ((d, &gg), &s) in d.iter_mut().zip(g).zip(y) {
                    *d += gg * (F::one() - s * s);
                }
            }),
            Op::Exp(x) => acc(*x, &|d| {
                for ((d, &gg), &s) in d.iter_mut().zip(g).zip(y) {
                    *d += gg * s;
                }
            }),
            Op::Ln(x) => acc(*x, &|d| {
                for ((d, &gg), &s) in d.iter_mut().zip(g).zip(val(*x)) {
                    *d += gg / s;
                }
            }),
            Op::Prelu(x, eta) => {
                let e = val(*eta)[0];
                let xv = val(*x);
                acc(*x, &|d| {
                    for ((d, &gg), &s) in d.iter_mut().zip(g).zip(xv) {
                        *d += if s >= F::zero() { gg } else { gg * e };
                    }
                });
                acc(*eta, &|d| {
                    d[0] += xv
                        .iter()
                        .zip(g)
                        .filter(|(s, _)| **s < F::zero())
                        .map(|(&s, &gg)| s * gg)
                        .sum::<F>();
                });
            }
            Op::Mask(x, m) => acc(*x, &|d| {
                for ((d, &gg), &mm) in d.iter_mut().zip(g).zip(m) {
                    *d += gg * mm;
                }
            }),
            Op::Sum(x) => acc(*x, &|d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let n = F::lit(val(*x).len() as f64);
                acc(*x, &|d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::SumAxis(x, axis) | Op::MeanAxis(x, axis) | Op::VarianceAxis(x, axis) => {
                let (outer, len, inner) = axis_view(shp(*x), *axis).expect("validated");
                let nl = F::lit(len as f64);
                let xv = val(*x);
                let two = F::lit(2.0);
                acc(*x, &|d| {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let gi = g[o * inner + ii];
                            let at = |l: usize| (o * len + l) * inner + ii;
                            match node.op {
                                Op::SumAxis(..) => (0..len).for_each(|l| d[at(l)] += gi),
                                Op::MeanAxis(..) => (0..len).for_each(|l| d[at(l)] += gi / nl),
                                _ => {
                                    let mu = (0..len).map(|l| xv[at(l)]).sum::<F>() / nl;
                                    (0..len).for_each(|l| d[at(l)] += gi * two * (xv[at(l)] - mu) / nl);
                                }
                            }
                        }
                    }
                });
            }
            Op::Softmax(x, axis) => {
                let (outer, len, inner) = axis_view(&node.shape, *axis).expect("validated");
                acc(*x, &|d| {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |l: usize| (o * len + l) * inner + ii;
                            let dot: F = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                            for l in 0..len {
                                d[at(l)] += y[at(l)] * (g[at(l)] - dot);
                            }
                        }
                    }
                });
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = axis_view(&node.shape, *axis).expect("validated");
                let mut offset = 0;
                for &p in parts {
                    let len = shp(p)[*axis];
                    acc(p, &|d| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            for (d, &gg) in d[o * len * inner..(o + 1) * len * inner].iter_mut().zip(src) {
                                *d += gg;
                            }
                        }
                    });
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, full, inner) = axis_view(shp(*x), *axis).expect("validated");
                let len = node.shape[*axis];
                acc(*x, &|d| {
                    for o in 0..outer {
                        let base = (o * full + start) * inner;
                        for (d, &gg) in d[base..base + len * inner].iter_mut().zip(&g[o * len * inner..(o + 1) * len * inner]) {
                            *d += gg;
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = (shp(*x)[0], shp(*x)[1]);
                acc(*x, &|d| {
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Conv1d { x, w, b, k, cols } => {
                let (t, cin) = (shp(*x)[0], shp(*x)[1]);
                let cout = node.shape[1];
                acc(*b, &|d| {
                    for row in g.chunks(cout) {
                        d.iter_mut().zip(row).for_each(|(d, &gg)| *d += gg);
                    }
                });
                acc(*w, &|d| kernels::gemm_tn(cols, g, d, k * cin, t, cout, true));
                if want(*x) {
                    let mut dcols = vec![F::zero(); t * k * cin];
                    kernels::gemm_nt(g, val(*w), &mut dcols, t, cout, k * cin, false);
                    acc(*x, &|d| kernels::col2im(&dcols, t, cin, *k, d));
                }
            }
            Op::Lstm { x, wx, wh, b, h0, c0, cache } => {
                let cache = cache.as_ref().expect("cache kept for tracked LSTM");
                self.lstm_backward(node, g, (*x, *wx, *wh, *b, *h0, *c0), cache, &mut acc);
            }
            Op::MaxPool { x, argmax } => acc(*x, &|d| {
                for (&src, &gg) in argmax.iter().zip(g) {
                    d[src] += gg;
                }
            }),
            Op::InstanceNorm { x, inv_std } => {
                let (t, c) = (node.shape[0], node.shape[1]);
                let n = F::lit(t as f64);
                let mut sum_g = vec![F::zero(); c];
                let mut sum_gy = vec![F::zero(); c];
                for (grow, yrow) in g.chunks(c).zip(y.chunks(c)) {
                    for j in 0..c {
                        sum_g[j] += grow[j];
                        sum_gy[j] += grow[j] * yrow[j];
                    }
                }
                acc(*x, &|d| {
                    for ((drow, grow), yrow) in d.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        for j in 0..c {
                            drow[j] += inv_std[j] * (grow[j] - sum_g[j] / n - yrow[j] * sum_gy[j] / n);
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let s = F::lit(2.0) * g[0] / F::lit(va.len() as f64);
                acc(*a, &|d| {
                    for ((d, &x), &z) in d.iter_mut().zip(va).zip(vb) {
                        *d += s * (x - z);
                    }
                });
                acc(*b, &|d| {
                    for ((d, &x), &z) in d.iter_mut().zip(va).zip(vb) {
                        *d -= s * (x - z);
                    }
                });
            }
            Op::CrossEntropy { logits, target, probs } => acc(*logits, &|d| {
                for (j, (d, &p)) in d.iter_mut().zip(probs).enumerate() {
                    let onehot = if j == *target { F::one() } else { F::zero() };
                    *d += g[0] * (p - onehot);
                }
            }),
        }
    }

    #[allow(clippy::type_complexity)]
    fn lstm_backward(
        &self,
        node: &Node<F>,
        g: &[F],
        (x, wx, wh, b, h0, c0): (Var, Var, Var, Var, Option<Var>, Option<Var>),
        cache: &LstmCache<F>,
        acc: &mut dyn FnMut(Var, &dyn Fn(&mut [F])),
    ) {
        let (t, h) = (node.shape[0], node.shape[1]);
        let d = self.nodes[x.0].shape[1];
        let hs = &node.value;
        let whv = &self.nodes[wh.0].value;
        let zero_h = vec![F::zero(); h];
        let h_init = h0.map_or(zero_h.as_slice(), |v| self.nodes[v.0].value.as_slice());
        let c_init = c0.map_or(zero_h.as_slice(), |v| self.nodes[v.0].value.as_slice());
        let one = F::one();

        let mut dz = vec![F::zero(); t * 4 * h];
        let mut dh_next = vec![F::zero(); h];
        let mut dc_next = vec![F::zero(); h];
        for step in (0..t).rev() {
            let gates = &cache.gates[step * 4 * h..(step + 1) * 4 * h];
            let c_prev = if step == 0 { c_init } else { &cache.cells[(step - 1) * h..step * h] };
            let dzr = &mut dz[step * 4 * h..(step + 1) * 4 * h];
            for j in 0..h {
                let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.tanh_cells[step * h + j];
                let dh = g[step * h + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * og * (one - tc * tc) + dc_next[j];
                dzr[j] = dc * gg * ig * (one - ig);
                dzr[h + j] = dc * c_prev[j] * fg * (one - fg);
                dzr[2 * h + j] = dc * ig * (one - gg * gg);
                dzr[3 * h + j] = d_o * og * (one - og);
                dc_next[j] = dc * fg;
            }
            kernels::gemm_nt(dzr, whv, &mut dh_next, 1, 4 * h, h, false);
        }
        acc(b, &|dst| {
            for row in dz.chunks(4 * h) {
                dst.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
            }
        });
        acc(wx, &|dst| kernels::gemm_tn(&self.nodes[x.0].value, &dz, dst, d, t, 4 * h, true));
        acc(wh, &|dst| {
            let mut h_prev = Vec::with_capacity(t * h);
            h_prev.extend_from_slice(h_init);
            h_prev.extend_from_slice(&hs[..(t - 1) * h]);
            kernels::gemm_tn(&h_prev, &dz, dst, h, t, 4 * h, true);
        });
        acc(x, &|dst| kernels::gemm_nt(&dz, &self.nodes[wx.0].value, dst, t, 4 * h, d, true));
        if let Some(v) = h0 {
            acc(v, &|dst| dst.iter_mut().zip(&dh_next).for_each(|(d, &v)| *d += v));
        }
        if let Some(v) = c0 {
            acc(v, &|dst| dst.iter_mut().zip(&dc_next).for_each(|(d, &v)| *d += v));
        }
    }
}
