use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::{Module, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::math;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for operations defined outside this module (STFT and
/// friends). Returns one gradient buffer per input, each the size of that
/// input.
pub trait CustomBackward {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &[f64]) -> Vec<Vec<f64>>;
}

enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, k: Var, geom: ConvGeom },
    ConvT2d { x: Var, k: Var, geom: ConvGeom },
    Relu(Var),
    Mul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    SwapLast2 { x: Var, outer: usize, rows: usize, cols: usize },
    Concat0(Vec<Var>),
    Narrow { x: Var, axis: usize, start: usize },
    ZeroPad { x: Var, axis: usize },
    Reshape(Var),
    Custom { inputs: Vec<Var>, rule: Box<dyn CustomBackward> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Dynamic tape recorded during one forward pass.
///
/// Nodes are appended in evaluation order, so reverse index order is a
/// valid topological order for [`Tape::backward`]. Gradients from repeated
/// `backward` calls accumulate until [`Tape::clear_grads`].
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(String, Var)>,
    track: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: Vec::new(),
            track: true,
        }
    }

    /// A tape on which parameters enter as constants; nothing needs a gradient.
    pub fn inference() -> Self {
        Tape {
            track: false,
            ..Self::new()
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.track
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.detached(), Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked (when the tape tracks at all).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let track = self.track;
        self.push(t.detached(), Op::Leaf, track)
    }

    /// Inserts a model parameter. The same name always maps to the same
    /// node, so shared parameters accumulate gradient from every use.
    pub fn param(&mut self, p: &Parameter) -> Var {
        if let Some((_, v)) = self.params.iter().find(|(n, _)| n == p.name()) {
            return *v;
        }
        let v = if self.track {
            self.leaf(p.tensor().clone())
        } else {
            self.constant(p.tensor().clone())
        };
        self.params.push((String::from(p.name()), v));
        v
    }

    /// Parameter entering as a constant regardless of tracking; used for
    /// frozen sub-networks.
    pub fn frozen_param(&mut self, p: &Parameter) -> Var {
        self.constant(p.tensor().clone())
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if ws.len() != 2 || xs.is_empty() || xs[xs.len() - 1] != ws[1] {
            return Err(Error::dim("linear", xs, ws));
        }
        if bs != [ws[0]] {
            return Err(Error::dim("linear bias", bs, ws));
        }
        let (f_out, f_in) = (ws[0], ws[1]);
        let mut shape: Vec<usize> = xs.into();
        *shape.last_mut().unwrap() = f_out;
        let rows = self.value(x).numel() / f_in.max(1);
        let mut y = vec![0.0; rows * f_out];
        kernels::linear_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            f_in,
            f_out,
            &mut y,
        );
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(shape, y)?, Op::Linear { x, w, b }, needs))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: (usize, usize), padding: (usize, usize)) -> Result<Var> {
        let (xs, ks) = (self.shape(x), self.shape(k));
        if xs.len() != 3 || ks.len() != 4 || ks[1] != xs[0] {
            return Err(Error::dim("conv2d", xs, ks));
        }
        let oh = kernels::conv2d_out_len(xs[1], ks[2], stride.0, padding.0);
        let ow = kernels::conv2d_out_len(xs[2], ks[3], stride.1, padding.1);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::dim("conv2d", xs, ks));
        };
        let geom = ConvGeom {
            c_in: xs[0],
            c_out: ks[0],
            h: xs[1],
            w: xs[2],
            kh: ks[2],
            kw: ks[3],
            sh: stride.0,
            sw: stride.1,
            ph: padding.0,
            pw: padding.1,
            oh,
            ow,
        };
        let mut y = vec![0.0; geom.c_out * oh * ow];
        kernels::conv2d_forward(self.value(x).data(), self.value(k).data(), &geom, &mut y);
        let needs = self.needs(x) || self.needs(k);
        Ok(self.push(
            Tensor::new([geom.c_out, oh, ow], y)?,
            Op::Conv2d { x, k, geom },
            needs,
        ))
    }

    /// Kernel layout `[c_in, c_out, kh, kw]`, no padding.
    pub fn conv_transpose2d(&mut self, x: Var, k: Var, stride: (usize, usize)) -> Result<Var> {
        let (xs, ks) = (self.shape(x), self.shape(k));
        if xs.len() != 3 || ks.len() != 4 || ks[0] != xs[0] || xs[1] == 0 || xs[2] == 0 {
            return Err(Error::dim("conv_transpose2d", xs, ks));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::contract("conv_transpose2d stride must be at least 1"));
        }
        let geom = ConvGeom {
            c_in: xs[0],
            c_out: ks[1],
            h: xs[1],
            w: xs[2],
            kh: ks[2],
            kw: ks[3],
            sh: stride.0,
            sw: stride.1,
            ph: 0,
            pw: 0,
            oh: kernels::conv_transpose2d_out_len(xs[1], ks[2], stride.0),
            ow: kernels::conv_transpose2d_out_len(xs[2], ks[3], stride.1),
        };
        let mut y = vec![0.0; geom.c_out * geom.oh * geom.ow];
        kernels::conv_transpose2d_forward(self.value(x).data(), self.value(k).data(), &geom, &mut y);
        let needs = self.needs(x) || self.needs(k);
        Ok(self.push(
            Tensor::new([geom.c_out, geom.oh, geom.ow], y)?,
            Op::ConvT2d { x, k, geom },
            needs,
        ))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(src.shape(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(t, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, math::abs, Op::Abs(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, op, needs))
    }

    /// Elementwise product of equal-shaped tensors.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "hadamard", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.numel().max(1) as f64;
        let s: f64 = t.data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s / n), Op::Mean(x), needs)
    }

    /// Swaps the two trailing dimensions.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() < 2 {
            return Err(Error::dim("swap_last2", xs, &[]));
        }
        let n = xs.len();
        let (rows, cols) = (xs[n - 2], xs[n - 1]);
        let outer = xs[..n - 2].iter().product::<usize>();
        let mut shape: Vec<usize> = xs.into();
        shape.swap(n - 2, n - 1);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        transpose_blocks(src, &mut out, outer, rows, cols);
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::SwapLast2 { x, outer, rows, cols },
            needs,
        ))
    }

    /// Concatenation along the leading dimension.
    pub fn concat0(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat0 of zero tensors"));
        };
        let tail: Vec<usize> = self.shape(first)[1..].into();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.len() != tail.len() + 1 || s[1..] != tail[..] {
                return Err(Error::dim("concat0", self.shape(first), s));
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat0(parts.into()), needs))
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x);
        if axis >= xs.len() || start + len > xs[axis] {
            return Err(Error::dim("narrow", xs, &[axis, start, len]));
        }
        let (outer, inner) = split_axis(xs, axis);
        let full = xs[axis];
        let mut shape: Vec<usize> = xs.into();
        shape[axis] = len;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Narrow { x, axis, start }, needs))
    }

    /// Zero-extends `axis` to `new_len`, keeping existing entries at the front.
    pub fn zero_pad(&mut self, x: Var, axis: usize, new_len: usize) -> Result<Var> {
        let xs = self.shape(x);
        if axis >= xs.len() || new_len < xs[axis] {
            return Err(Error::dim("zero_pad", xs, &[axis, new_len]));
        }
        let (outer, inner) = split_axis(xs, axis);
        let old = xs[axis];
        let mut shape: Vec<usize> = xs.into();
        shape[axis] = new_len;
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * new_len * inner];
        for o in 0..outer {
            out[o * new_len * inner..(o * new_len + old) * inner]
                .copy_from_slice(&src[o * old * inner..(o + 1) * old * inner]);
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::ZeroPad { x, axis }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).detached().reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), needs))
    }

    /// Records an externally computed value together with its backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, rule: Box<dyn CustomBackward>) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(
            output.detached(),
            Op::Custom {
                inputs: inputs.into(),
                rule,
            },
            needs,
        )
    }

    pub fn clear_grads(&mut self) {
        self.grads.clear();
    }

    /// Reverse-mode accumulation from a single-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        if self.grads.len() < n {
            self.grads.resize_with(n, || None);
        }
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            if !matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].needs_grad {
                continue;
            }
            match &mut self.grads[i] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (f_out, f_in) = (ws[0], ws[1]);
                let mut gx = self.buf_if(*x);
                let mut gw = self.buf_if(*w);
                let mut gb = self.buf_if(*b);
                kernels::linear_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    f_in,
                    f_out,
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                self.acc(grads, *x, gx);
                self.acc(grads, *w, gw);
                self.acc(grads, *b, gb);
            }
            Op::Conv2d { x, k, geom } => {
                let mut gx = self.buf_if(*x);
                let mut gk = self.buf_if(*k);
                kernels::conv2d_backward(
                    self.value(*x).data(),
                    self.value(*k).data(),
                    geom,
                    g,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                );
                self.acc(grads, *x, gx);
                self.acc(grads, *k, gk);
            }
            Op::ConvT2d { x, k, geom } => {
                let mut gx = self.buf_if(*x);
                let mut gk = self.buf_if(*k);
                kernels::conv_transpose2d_backward(
                    self.value(*x).data(),
                    self.value(*k).data(),
                    geom,
                    g,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                );
                self.acc(grads, *x, gx);
                self.acc(grads, *k, gk);
            }
            Op::Relu(x) => {
                let src = self.value(*x).data();
                let gx = g
                    .iter()
                    .zip(src)
                    .map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                self.acc(grads, *x, Some(gx));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let ga = g.iter().zip(vb).map(|(x, y)| x * y).collect();
                    self.acc(grads, *a, Some(ga));
                }
                if self.needs(*b) {
                    let gb = g.iter().zip(va).map(|(x, y)| x * y).collect();
                    self.acc(grads, *b, Some(gb));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, Some(g.to_vec()));
                self.acc(grads, *b, Some(g.to_vec()));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, Some(g.to_vec()));
                self.acc(grads, *b, Some(g.iter().map(|v| -v).collect()));
            }
            Op::Scale(x, c) => {
                self.acc(grads, *x, Some(g.iter().map(|v| v * c).collect()));
            }
            Op::Abs(x) => {
                let src = self.value(*x).data();
                let gx = g
                    .iter()
                    .zip(src)
                    .map(|(&gv, &v)| {
                        if v > 0.0 {
                            gv
                        } else if v < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.acc(grads, *x, Some(gx));
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.acc(grads, *x, Some(vec![g[0]; n]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                self.acc(grads, *x, Some(vec![g[0] / n.max(1) as f64; n]));
            }
            Op::SwapLast2 { x, outer, rows, cols } => {
                let mut gx = vec![0.0; g.len()];
                transpose_blocks(g, &mut gx, *outer, *cols, *rows);
                self.acc(grads, *x, Some(gx));
            }
            Op::Concat0(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    self.acc(grads, p, Some(g[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, inner) = split_axis(xs, *axis);
                let full = xs[*axis];
                let len = node.value.shape()[*axis];
                let mut gx = vec![0.0; self.value(*x).numel()];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                self.acc(grads, *x, Some(gx));
            }
            Op::ZeroPad { x, axis } => {
                let xs = self.shape(*x);
                let (outer, inner) = split_axis(xs, *axis);
                let old = xs[*axis];
                let new_len = node.value.shape()[*axis];
                let mut gx = Vec::with_capacity(self.value(*x).numel());
                for o in 0..outer {
                    gx.extend_from_slice(&g[o * new_len * inner..(o * new_len + old) * inner]);
                }
                self.acc(grads, *x, Some(gx));
            }
            Op::Reshape(x) => self.acc(grads, *x, Some(g.to_vec())),
            Op::Custom { inputs, rule } => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gs = rule.backward(&vals, &node.value, g);
                for (&v, gv) in inputs.iter().zip(gs) {
                    self.acc(grads, v, Some(gv));
                }
            }
        }
    }

    fn buf_if(&self, v: Var) -> Option<Vec<f64>> {
        self.needs(v).then(|| vec![0.0; self.value(v).numel()])
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Option<Vec<f64>>) {
        let Some(g) = g else { return };
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    /// Gradient of a leaf after [`Tape::backward`]; `None` when the leaf was
    /// not reached or does not track gradients.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Adds the recorded gradient of every parameter of `module` into its
    /// tensor's grad buffer. Parameters that were not used on this tape, or
    /// that the loss does not depend on, receive an explicit zero gradient.
    pub fn write_param_grads<M: Module + ?Sized>(&self, module: &mut M) -> Result<()> {
        for p in module.parameters_mut() {
            let g = self.param_var(p.name()).and_then(|v| self.grad(v));
            match g {
                Some(g) => p.tensor_mut().accumulate_grad(g)?,
                None => {
                    let zeros = vec![0.0; p.numel()];
                    p.tensor_mut().accumulate_grad(&zeros)?
                }
            }
        }
        Ok(())
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
}

fn transpose_blocks(src: &[f64], dst: &mut [f64], outer: usize, rows: usize, cols: usize) {
    let block = rows * cols;
    for o in 0..outer {
        let s = &src[o * block..(o + 1) * block];
        let d = &mut dst[o * block..(o + 1) * block];
        for r in 0..rows {
            for c in 0..cols {
                d[c * rows + r] = s[r * cols + c];
            }
        }
    }
}
