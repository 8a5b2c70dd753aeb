//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is already a topological order of the
//! graph and [`Tape::backward`] walks it once in reverse. Gradients reaching a
//! node from several consumers are summed.
//!
//! ```
//! use collab::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![2.0, -1.0]), true);
//! let sq = tape.sum_squares(x);
//! let loss = tape.scale(sq, 0.5);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).unwrap(), &[2.0, -1.0]);
//! ```

use std::collections::HashMap;

use crate::error::{config_err, shape_err, Error, Result};
use crate::kernels::{self, ConvGeometry};
use crate::params::{ParamId, ParameterStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
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
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Conv2d {
        input: Var,
        weight: Var,
        geom: ConvGeometry,
    },
    AvgPool2d {
        input: Var,
        size: usize,
    },
    Reshape(Var),
    Rescale {
        input: Var,
        factor: f64,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    SumSquares(Var),
    Softmax {
        input: Var,
        temperature: f64,
    },
    LogSoftmax {
        input: Var,
        temperature: f64,
        clamped: Vec<bool>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Total number of scalars held by recorded node outputs.
    pub fn activation_count(&self) -> usize {
        self.nodes.iter().map(|n| n.value.len()).sum()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds a stored parameter. Binding the same id twice yields the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.param_vars.insert(id, v);
        v
    }

    /// Copy of `x` cut off from gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("cannot multiply {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a per-channel bias along dimension 1 (features for `[N,F]`,
    /// channels for NCHW).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() < 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(shape_err(
                "add_bias",
                format!("bias {sb:?} does not match dim 1 of {sx:?}"),
            ));
        }
        let inner: usize = sx[2..].iter().product();
        let channels = sx[1];
        let shape = sx.to_vec();
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v += b[(i / inner) % channels];
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    /// Cross-correlation of an NCHW input with an `[out, in, kh, kw]` kernel.
    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(input), self.shape(weight), stride, pad)?;
        let out = kernels::conv2d_forward(self.value(input).data(), self.value(weight).data(), &geom);
        let rg = self.rg(input) || self.rg(weight);
        Ok(self.push(
            Tensor::new(geom.out_shape(), out)?,
            Op::Conv2d { input, weight, geom },
            rg,
        ))
    }

    /// Non-overlapping `size x size` average pooling; spatial dims must divide evenly.
    pub fn avgpool2d(&mut self, input: Var, size: usize) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 || size == 0 || !s[2].is_multiple_of(size) || !s[3].is_multiple_of(size) {
            return Err(shape_err(
                "avgpool2d",
                format!("window {size} does not tile input {s:?}"),
            ));
        }
        let out = kernels::avgpool2d_forward(self.value(input).data(), &s, size);
        let rg = self.rg(input);
        Ok(self.push(
            Tensor::new(vec![s[0], s[1], s[2] / size, s[3] / size], out)?,
            Op::AvgPool2d { input, size },
            rg,
        ))
    }

    /// `[N, ...] -> [N, prod(...)]`
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.is_empty() {
            return Err(shape_err("flatten", "scalar input"));
        }
        let n = s[0];
        let rest: usize = s[1..].iter().product();
        let value = self.value(x).clone().reshape(vec![n, rest])?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Identity on the forward pass; scales the incoming gradient by `factor`
    /// on the backward pass.
    pub fn rescale_identity(&mut self, x: Var, factor: f64) -> Result<Var> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(config_err(format!("rescale factor must lie in (0, 1], got {factor}")));
        }
        let value = self.value(x).clone();
        let rg = self.rg(x);
        Ok(self.push(value, Op::Rescale { input: x, factor }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn elementwise(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, c), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    fn check_logits(&self, name: &str, x: Var, temperature: f64) -> Result<(usize, usize)> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(config_err(format!(
                "{name}: temperature must be positive, got {temperature}"
            )));
        }
        let s = self.shape(x);
        let m = *s.last().unwrap_or(&0);
        if m < 2 {
            return Err(shape_err(name, format!("need at least two classes, got shape {s:?}")));
        }
        if !self.value(x).all_finite() {
            return Err(Error::NonFinite(format!("{name} logits")));
        }
        Ok((self.value(x).len() / m, m))
    }

    /// Row-wise temperature softmax over the last dimension.
    pub fn softmax_t(&mut self, x: Var, temperature: f64) -> Result<Var> {
        let (rows, m) = self.check_logits("softmax_t", x, temperature)?;
        let z = self.value(x);
        let mut out = vec![0.0; rows * m];
        for r in 0..rows {
            kernels::softmax_row(&z.data()[r * m..(r + 1) * m], temperature, &mut out[r * m..(r + 1) * m]);
        }
        let value = Tensor::new(z.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax { input: x, temperature }, rg))
    }

    /// Row-wise `log softmax_t`. With `floor`, outputs are clamped from below
    /// and clamped entries pass no gradient.
    pub fn log_softmax_t(&mut self, x: Var, temperature: f64, floor: Option<f64>) -> Result<Var> {
        let (rows, m) = self.check_logits("log_softmax_t", x, temperature)?;
        let z = self.value(x);
        let mut out = vec![0.0; rows * m];
        let mut clamped = vec![false; rows * m];
        for r in 0..rows {
            let span = r * m..(r + 1) * m;
            kernels::log_softmax_row(
                &z.data()[span.clone()],
                temperature,
                floor,
                &mut out[span.clone()],
                &mut clamped[span],
            );
        }
        let value = Tensor::new(z.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::LogSoftmax {
                input: x,
                temperature,
                clamped,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let params = self.param_vars.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if let Some(ga) = slot(nodes, grads, *a) {
                    kernels::matmul_bt_acc(g, nodes[b.0].value.data(), ga, m, k, n);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    kernels::matmul_at_acc(nodes[a.0].value.data(), g, gb, m, k, n);
                }
            }
            Op::AddBias(x, b) => {
                let s = nodes[x.0].value.shape();
                let inner: usize = s[2..].iter().product();
                let channels = s[1];
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (d, v) in gx.iter_mut().zip(g) {
                        *d += v;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for (i, v) in g.iter().enumerate() {
                        gb[(i / inner) % channels] += v;
                    }
                }
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((d, v), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        if xi > 0.0 {
                            *d += v;
                        }
                    }
                }
            }
            Op::Conv2d { input, weight, geom } => {
                let xv = nodes[input.0].value.data();
                let wv = nodes[weight.0].value.data();
                // Split the two accumulations so only one buffer is borrowed at a time.
                let mut gw_buf = nodes[weight.0].requires_grad.then(|| vec![0.0; wv.len()]);
                match slot(nodes, grads, *input) {
                    Some(gx) => kernels::conv2d_backward(xv, wv, g, geom, Some(gx), gw_buf.as_deref_mut()),
                    None => kernels::conv2d_backward(xv, wv, g, geom, None, gw_buf.as_deref_mut()),
                }
                if let (Some(buf), Some(gw)) = (gw_buf, slot(nodes, grads, *weight)) {
                    for (d, v) in gw.iter_mut().zip(buf) {
                        *d += v;
                    }
                }
            }
            Op::AvgPool2d { input, size } => {
                let s = nodes[input.0].value.shape().to_vec();
                if let Some(gx) = slot(nodes, grads, *input) {
                    kernels::avgpool2d_backward(g, &s, *size, gx);
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (d, v) in gx.iter_mut().zip(g) {
                        *d += v;
                    }
                }
            }
            Op::Rescale { input, factor } => {
                if let Some(gx) = slot(nodes, grads, *input) {
                    for (d, v) in gx.iter_mut().zip(g) {
                        *d += factor * v;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = slot(nodes, grads, v) {
                        for (d, x) in gv.iter_mut().zip(g) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, x), y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += x * y;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((d, x), y) in gb.iter_mut().zip(g).zip(av) {
                        *d += x * y;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (d, v) in gx.iter_mut().zip(g) {
                        *d += c * v;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for d in gx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SumSquares(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (d, &v) in gx.iter_mut().zip(xv) {
                        *d += 2.0 * v * g[0];
                    }
                }
            }
            Op::Softmax { input, temperature } => {
                let p = node.value.data();
                let m = *node.value.shape().last().unwrap();
                if let Some(gx) = slot(nodes, grads, *input) {
                    for r in 0..p.len() / m {
                        let span = r * m..(r + 1) * m;
                        let dot: f64 = g[span.clone()].iter().zip(&p[span.clone()]).map(|(a, b)| a * b).sum();
                        for i in span {
                            gx[i] += p[i] * (g[i] - dot) / temperature;
                        }
                    }
                }
            }
            Op::LogSoftmax {
                input,
                temperature,
                clamped,
            } => {
                let z = nodes[input.0].value.data();
                let m = *node.value.shape().last().unwrap();
                if let Some(gx) = slot(nodes, grads, *input) {
                    let mut probs = vec![0.0; m];
                    for r in 0..z.len() / m {
                        let span = r * m..(r + 1) * m;
                        kernels::softmax_row(&z[span.clone()], *temperature, &mut probs);
                        let live = |i: usize| if clamped[i] { 0.0 } else { g[i] };
                        let total: f64 = span.clone().map(live).sum();
                        for (j, i) in span.enumerate() {
                            gx[i] += (live(i) - probs[j] * total) / temperature;
                        }
                    }
                }
            }
        }
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]))
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any flowed there.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for a stored parameter that was bound on the tape.
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    /// Adds every parameter gradient into the store's `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParameterStore) {
        for &(id, v) in &self.params {
            if let Some(g) = self.wrt(v) {
                store.accumulate_grad(id, g);
            }
        }
    }
}
