use super::{Gradients, ParamId, ParamSet, Tensor, TensorError};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    Conv1d { x: Var, k: Var, b: Var, stride: usize },
    Elu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Vec<Var>),
    CrossEntropy { probs: Var, target: Vec<f64> },
    Entropy(Var),
    MseHalf(Var, Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    // Empty for parameter nodes; their values live in the borrowed ParamSet.
    value: Tensor,
}

/// Record of one forward computation, replayed backwards by [`Tape::backward`].
///
/// Parameters are borrowed, not copied: each parameter gets a single node the
/// first time it is used, and every later use shares that node so gradients
/// from all uses accumulate in one place.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Adjoints of every node reached during a backward pass.
pub struct Adjoints {
    adj: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.adj[var.0].as_deref()
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], var: Var, len: usize) -> &mut [f64] {
    adj[var.0].get_or_insert_with(|| vec![0.0; len])
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        match self.nodes[var.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[var.0].value,
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf. Its adjoint is still tracked, which the gradient
    /// checks use to differentiate with respect to inputs.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(var) = self.param_vars[id.0] {
            return var;
        }
        let var = self.push(Op::Param(id), Tensor::zeros(&[0]));
        self.param_vars[id.0] = Some(var);
        var
    }

    /// `y = W x + b` with `W: [m, n]`, `x: [n]`, `b: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let ws = wv.shape();
        if ws.len() != 2 {
            return Err(TensorError::Invalid {
                op: "linear",
                reason: format!("weights must be 2-D, got {ws:?}"),
            });
        }
        let (m, n) = (ws[0], ws[1]);
        if xv.numel() != n {
            return Err(TensorError::shape("linear", &[n], xv.shape()));
        }
        if bv.numel() != m {
            return Err(TensorError::shape("linear", &[m], bv.shape()));
        }
        let (xd, wd) = (xv.data(), wv.data());
        let out: Vec<f64> = bv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &bias)| {
                let row = &wd[i * n..(i + 1) * n];
                bias + row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(self.push(Op::Linear { x, w, b }, Tensor::vector(out)))
    }

    /// Valid (unpadded) strided cross-correlation.
    /// `x: [c, len]`, `k: [out_ch, c, width]`, `b: [out_ch]` → `[out_ch, out_len]`.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Var, stride: usize) -> Result<Var, TensorError> {
        let (xv, kv, bv) = (self.value(x), self.value(k), self.value(b));
        let (xs, ks) = (xv.shape(), kv.shape());
        if xs.len() != 2 || ks.len() != 3 {
            return Err(TensorError::Invalid {
                op: "conv1d",
                reason: format!("input {xs:?} must be [c, len], kernels {ks:?} must be [o, c, k]"),
            });
        }
        let (channels, len) = (xs[0], xs[1]);
        let (out_ch, width) = (ks[0], ks[2]);
        if ks[1] != channels {
            return Err(TensorError::shape("conv1d", &[out_ch, channels, width], ks));
        }
        if bv.numel() != out_ch {
            return Err(TensorError::shape("conv1d", &[out_ch], bv.shape()));
        }
        if stride == 0 || len < width {
            return Err(TensorError::Invalid {
                op: "conv1d",
                reason: format!("length {len} shorter than kernel {width} (stride {stride})"),
            });
        }
        let out_len = (len - width) / stride + 1;
        let (xd, kd, bd) = (xv.data(), kv.data(), bv.data());
        let mut out = vec![0.0; out_ch * out_len];
        for o in 0..out_ch {
            for t in 0..out_len {
                let mut acc = bd[o];
                for c in 0..channels {
                    let kern = &kd[(o * channels + c) * width..][..width];
                    let window = &xd[c * len + t * stride..][..width];
                    acc += kern.iter().zip(window).map(|(a, b)| a * b).sum::<f64>();
                }
                out[o * out_len + t] = acc;
            }
        }
        let value = Tensor::new(&[out_ch, out_len], out)?;
        Ok(self.push(Op::Conv1d { x, k, b, stride }, value))
    }

    fn map_unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = self.value(x);
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data: xv.data().iter().map(|&v| f(v)).collect(),
        };
        self.push(op, value)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Elu(x), elu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Sigmoid(x), |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map_unary(x, Op::Scale(x, factor), |v| v * factor)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.shape().len() != 1 {
            return Err(TensorError::Invalid {
                op: "softmax",
                reason: format!("input must be 1-D, got {:?}", xv.shape()),
            });
        }
        let out = softmax(xv.data());
        Ok(self.push(Op::Softmax(x), Tensor::vector(out)))
    }

    /// Concatenates flattened inputs into one 1-D tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.value(p).numel()).sum());
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(out))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if start + len > xv.numel() {
            return Err(TensorError::Invalid {
                op: "slice",
                reason: format!("range {start}..{} out of {}", start + len, xv.numel()),
            });
        }
        let out = xv.data()[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x, start }, Tensor::vector(out)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), value))
    }

    pub fn flatten(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        self.reshape(x, &[n]).expect("flatten preserves element count")
    }

    fn zip_binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.numel() != bv.numel() {
            return Err(TensorError::shape(name, av.shape(), bv.shape()));
        }
        let value = Tensor {
            shape: av.shape().to_vec(),
            data: av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
        };
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise sum of equally-sized tensors.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = terms.first() else {
            return Ok(self.input(Tensor::scalar(0.0)));
        };
        let mut acc = self.value(first).clone();
        for &t in &terms[1..] {
            let tv = self.value(t);
            if tv.numel() != acc.numel() {
                return Err(TensorError::shape("sum", acc.shape(), tv.shape()));
            }
            acc.data_mut().iter_mut().zip(tv.data()).for_each(|(a, b)| *a += b);
        }
        Ok(self.push(Op::Sum(terms.to_vec()), acc))
    }

    /// `−Σ target_j · ln(max(prob_j, 1e−12))`.
    pub fn cross_entropy(&mut self, probs: Var, target: &[f64]) -> Result<Var, TensorError> {
        let pv = self.value(probs);
        if pv.numel() != target.len() {
            return Err(TensorError::shape("cross_entropy", &[target.len()], pv.shape()));
        }
        let loss = cross_entropy(pv.data(), target);
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                target: target.to_vec(),
            },
            Tensor::scalar(loss),
        ))
    }

    /// `−Σ p ln p`, with `0 ln 0 = 0`.
    pub fn entropy(&mut self, probs: Var) -> Var {
        let h = entropy(self.value(probs).data());
        self.push(Op::Entropy(probs), Tensor::scalar(h))
    }

    /// `½‖a − b‖²`.
    pub fn mse_half(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.numel() != bv.numel() {
            return Err(TensorError::shape("mse_half", av.shape(), bv.shape()));
        }
        let loss = mse_half(av.data(), bv.data());
        Ok(self.push(Op::MseHalf(a, b), Tensor::scalar(loss)))
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are *added* to
    /// `grads`; call [`Gradients::reset`] to start afresh.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<Adjoints, TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::shape("backward", &[1], lv.shape()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(dy) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let g = grads.get_mut(*id);
                    if g.numel() != dy.len() {
                        return Err(TensorError::shape("backward", g.shape(), &[dy.len()]));
                    }
                    g.data_mut().iter_mut().zip(&dy).for_each(|(g, d)| *g += d);
                }
                Op::Linear { x, w, b } => {
                    let (xd, wd) = (self.value(*x).data(), self.value(*w).data());
                    let n = xd.len();
                    let dx = accumulate(&mut adj, *x, n);
                    for (i, &d) in dy.iter().enumerate() {
                        if d != 0.0 {
                            let row = &wd[i * n..(i + 1) * n];
                            dx.iter_mut().zip(row).for_each(|(dx, w)| *dx += d * w);
                        }
                    }
                    let dw = accumulate(&mut adj, *w, wd.len());
                    for (i, &d) in dy.iter().enumerate() {
                        if d != 0.0 {
                            let row = &mut dw[i * n..(i + 1) * n];
                            row.iter_mut().zip(xd).for_each(|(dw, x)| *dw += d * x);
                        }
                    }
                    let db = accumulate(&mut adj, *b, dy.len());
                    db.iter_mut().zip(&dy).for_each(|(db, d)| *db += d);
                }
                Op::Conv1d { x, k, b, stride } => {
                    let (xv, kv) = (self.value(*x), self.value(*k));
                    let (channels, len) = (xv.shape()[0], xv.shape()[1]);
                    let (out_ch, width) = (kv.shape()[0], kv.shape()[2]);
                    let out_len = node.value.shape()[1];
                    let (xd, kd) = (xv.data(), kv.data());
                    {
                        let dk = accumulate(&mut adj, *k, kd.len());
                        for o in 0..out_ch {
                            for t in 0..out_len {
                                let d = dy[o * out_len + t];
                                for c in 0..channels {
                                    let dkern = &mut dk[(o * channels + c) * width..][..width];
                                    let window = &xd[c * len + t * stride..][..width];
                                    dkern.iter_mut().zip(window).for_each(|(g, x)| *g += d * x);
                                }
                            }
                        }
                    }
                    {
                        let dx = accumulate(&mut adj, *x, xd.len());
                        for o in 0..out_ch {
                            for t in 0..out_len {
                                let d = dy[o * out_len + t];
                                for c in 0..channels {
                                    let kern = &kd[(o * channels + c) * width..][..width];
                                    let dwin = &mut dx[c * len + t * stride..][..width];
                                    dwin.iter_mut().zip(kern).for_each(|(g, k)| *g += d * k);
                                }
                            }
                        }
                    }
                    let db = accumulate(&mut adj, *b, out_ch);
                    for o in 0..out_ch {
                        db[o] += dy[o * out_len..(o + 1) * out_len].iter().sum::<f64>();
                    }
                }
                Op::Elu(x) => {
                    let xd = self.value(*x).data();
                    let dx = accumulate(&mut adj, *x, xd.len());
                    for ((g, &xi), &d) in dx.iter_mut().zip(xd).zip(&dy) {
                        *g += if xi > 0.0 { d } else { d * xi.exp() };
                    }
                }
                Op::Sigmoid(x) => {
                    let yd = node.value.data();
                    let dx = accumulate(&mut adj, *x, yd.len());
                    for ((g, &y), &d) in dx.iter_mut().zip(yd).zip(&dy) {
                        *g += d * y * (1.0 - y);
                    }
                }
                Op::Tanh(x) => {
                    let yd = node.value.data();
                    let dx = accumulate(&mut adj, *x, yd.len());
                    for ((g, &y), &d) in dx.iter_mut().zip(yd).zip(&dy) {
                        *g += d * (1.0 - y * y);
                    }
                }
                Op::Scale(x, factor) => {
                    let dx = accumulate(&mut adj, *x, dy.len());
                    dx.iter_mut().zip(&dy).for_each(|(g, d)| *g += factor * d);
                }
                Op::Softmax(x) => {
                    let yd = node.value.data();
                    let dot: f64 = yd.iter().zip(&dy).map(|(y, d)| y * d).sum();
                    let dx = accumulate(&mut adj, *x, yd.len());
                    for ((g, &y), &d) in dx.iter_mut().zip(yd).zip(&dy) {
                        *g += y * (d - dot);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        let dp = accumulate(&mut adj, p, n);
                        dp.iter_mut()
                            .zip(&dy[offset..offset + n])
                            .for_each(|(g, d)| *g += d);
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.value(*x).numel();
                    let dx = accumulate(&mut adj, *x, n);
                    dx[*start..*start + dy.len()]
                        .iter_mut()
                        .zip(&dy)
                        .for_each(|(g, d)| *g += d);
                }
                Op::Reshape(x) => {
                    let dx = accumulate(&mut adj, *x, dy.len());
                    dx.iter_mut().zip(&dy).for_each(|(g, d)| *g += d);
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let dv = accumulate(&mut adj, v, dy.len());
                        dv.iter_mut().zip(&dy).for_each(|(g, d)| *g += d);
                    }
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                    {
                        let da = accumulate(&mut adj, *a, dy.len());
                        for ((g, &bv), &d) in da.iter_mut().zip(bd).zip(&dy) {
                            *g += d * bv;
                        }
                    }
                    let db = accumulate(&mut adj, *b, dy.len());
                    for ((g, &av), &d) in db.iter_mut().zip(ad).zip(&dy) {
                        *g += d * av;
                    }
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        let dt = accumulate(&mut adj, t, dy.len());
                        dt.iter_mut().zip(&dy).for_each(|(g, d)| *g += d);
                    }
                }
                Op::CrossEntropy { probs, target } => {
                    let pd = self.value(*probs).data();
                    let dp = accumulate(&mut adj, *probs, pd.len());
                    for ((g, &p), &t) in dp.iter_mut().zip(pd).zip(target) {
                        if p >= LOG_EPS {
                            *g -= dy[0] * t / p;
                        }
                    }
                }
                Op::Entropy(probs) => {
                    let pd = self.value(*probs).data();
                    let dp = accumulate(&mut adj, *probs, pd.len());
                    for (g, &p) in dp.iter_mut().zip(pd) {
                        if p > 0.0 {
                            *g -= dy[0] * (p.ln() + 1.0);
                        }
                    }
                }
                Op::MseHalf(a, b) => {
                    let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                    let diff: Vec<f64> = ad.iter().zip(bd).map(|(x, y)| x - y).collect();
                    {
                        let da = accumulate(&mut adj, *a, diff.len());
                        da.iter_mut().zip(&diff).for_each(|(g, e)| *g += dy[0] * e);
                    }
                    let db = accumulate(&mut adj, *b, diff.len());
                    db.iter_mut().zip(&diff).for_each(|(g, e)| *g -= dy[0] * e);
                }
            }
            adj[i] = Some(dy);
        }
        Ok(Adjoints { adj })
    }
}

/// Standard LSTM cell. `w: [4H, in + H]`, `b: [4H]`, gate rows ordered
/// input, forget, candidate, output. Returns `(h', c')`.
pub fn lstm_cell(
    tape: &mut Tape<'_>,
    x: Var,
    h: Var,
    c: Var,
    w: Var,
    b: Var,
) -> Result<(Var, Var), TensorError> {
    let hidden = tape.value(h).numel();
    if tape.value(c).numel() != hidden {
        return Err(TensorError::shape("lstm_cell", &[hidden], tape.value(c).shape()));
    }
    let xh = tape.concat(&[x, h]);
    let gates = tape.linear(xh, w, b)?;
    if tape.value(gates).numel() != 4 * hidden {
        return Err(TensorError::shape(
            "lstm_cell",
            &[4 * hidden],
            tape.value(gates).shape(),
        ));
    }
    let i = tape.slice(gates, 0, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.slice(gates, hidden, hidden)?;
    let f = tape.sigmoid(f);
    let g = tape.slice(gates, 2 * hidden, hidden)?;
    let g = tape.tanh(g);
    let o = tape.slice(gates, 3 * hidden, hidden)?;
    let o = tape.sigmoid(o);

    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn cross_entropy(probs: &[f64], target: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| t * p.max(LOG_EPS).ln())
        .sum::<f64>()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub fn mse_half(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}
