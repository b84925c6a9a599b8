//! Grid-level reverse-mode tape.
//!
//! Every recorded operation is one tensor-core call; its forward value is
//! computed by exactly the same eager function a caller would use outside
//! the tape. Nodes are appended in execution order, so the tape is
//! topologically sorted by construction and backward is a single reverse
//! sweep.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::blocks::BlockMap;
use crate::tensor::fft::{fft2, fft2_adjoint, ifft2};
use crate::tensor::grid::{ComplexGrid, RealGrid, Tensor};
use crate::tensor::nn::{
    col2im3x3, conv1x1, conv3x3_from_col, depthwise_conv3x3, im2col3x3, instance_norm_with_stats,
    reflect, relu, sigmoid,
};
use crate::tensor::polar::{combine_polar, magnitude, phase};
use crate::tensor::sample::Gather4;

/// Below this magnitude the polar gradients are defined as zero.
pub const POLAR_GRAD_EPS: f64 = 1e-8;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum Value<T> {
    Real(RealGrid<T>),
    Complex(ComplexGrid<T>),
    Tensor(Tensor<T>),
}

impl<T: Scalar> Value<T> {
    fn add_assign(&mut self, other: &Value<T>) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => add_slices(a.data_mut(), b.data()),
            (Value::Complex(a), Value::Complex(b)) => {
                add_slices(&mut a.re, &b.re);
                add_slices(&mut a.im, &b.im);
            }
            (Value::Tensor(a), Value::Tensor(b)) => add_slices(a.data_mut(), b.data()),
            _ => unreachable!("gradient kind always matches its node kind"),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Real(_) => "real grid",
            Value::Complex(_) => "complex grid",
            Value::Tensor(_) => "tensor",
        }
    }
}

fn add_slices<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

enum Op<T> {
    Input,
    Param,
    Conv1x1 { x: Var, w: Var, b: Var },
    Conv3x3 { x: Var, w: Var, b: Var, col: Vec<T> },
    Depthwise { x: Var, k: Var },
    InstanceNorm { x: Var, inv_std: Vec<T> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Affine { x: Var, scale: T },
    Add { a: Var, b: Var },
    AddConst { x: Var },
    Concat { parts: Vec<Var> },
    Gather { x: Var, plan: Rc<Gather4<T>> },
    Fft2 { x: Var },
    Ifft2 { x: Var },
    Magnitude { x: Var },
    Phase { x: Var },
    FromPolar { mag: Var, phase: Var },
    ComplexConv1x1 { x: Var, wr: Var, wi: Var },
    AbsMean { x: Var },
    Mean { x: Var },
    Dot { x: Var, c: Value<T> },
    AsGrid { x: Var },
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
    param_index: HashMap<String, Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-node gradients produced by [`Tape::gradients`].
pub struct NodeGrads<T> {
    grads: Vec<Option<Value<T>>>,
}

impl<T: Scalar> NodeGrads<T> {
    pub fn get(&self, v: Var) -> Option<&Value<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param => true,
            Op::Input => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Value<T> {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> Result<&RealGrid<T>> {
        match &self.nodes[v.0].value {
            Value::Real(g) => Ok(g),
            other => Err(Error::Autodiff(format!("expected real grid, found {}", other.kind()))),
        }
    }

    pub fn complex(&self, v: Var) -> Result<&ComplexGrid<T>> {
        match &self.nodes[v.0].value {
            Value::Complex(g) => Ok(g),
            other => Err(Error::Autodiff(format!(
                "expected complex grid, found {}",
                other.kind()
            ))),
        }
    }

    pub fn tensor(&self, v: Var) -> Result<&Tensor<T>> {
        match &self.nodes[v.0].value {
            Value::Tensor(t) => Ok(t),
            other => Err(Error::Autodiff(format!("expected tensor, found {}", other.kind()))),
        }
    }

    /// Scalar value of a one-element tensor node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        let t = self.tensor(v)?;
        if t.len() != 1 {
            return Err(Error::Autodiff(format!("node is not scalar: {:?}", t.dims())));
        }
        Ok(t.data()[0])
    }

    /// Constant real-grid leaf (no gradient).
    pub fn input(&mut self, grid: RealGrid<T>) -> Var {
        self.push(Value::Real(grid), Op::Input, &[])
    }

    /// Constant tensor leaf (no gradient).
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Value::Tensor(t), Op::Input, &[])
    }

    /// Trainable leaf taken from `store[key]`. Registering the same key twice
    /// returns the existing node.
    pub fn param(&mut self, store: &BlockMap<T>, key: &str) -> Result<Var> {
        if let Some(&v) = self.param_index.get(key) {
            return Ok(v);
        }
        let t = store.require(key)?.clone();
        let v = self.push(Value::Tensor(t), Op::Param, &[]);
        self.params.push((key.to_string(), v));
        self.param_index.insert(key.to_string(), v);
        Ok(v)
    }

    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = conv1x1(self.real(x)?, self.tensor(w)?, self.tensor(b)?)?;
        Ok(self.push(Value::Real(y), Op::Conv1x1 { x, w, b }, &[x, w, b]))
    }

    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xg = self.real(x)?;
        let (h, wd, c) = xg.dims();
        let col = im2col3x3(xg)?;
        let y = conv3x3_from_col(&col, h, wd, c, self.tensor(w)?, self.tensor(b)?)?;
        Ok(self.push(Value::Real(y), Op::Conv3x3 { x, w, b, col }, &[x, w, b]))
    }

    pub fn depthwise3x3(&mut self, x: Var, k: Var) -> Result<Var> {
        let y = depthwise_conv3x3(self.real(x)?, self.tensor(k)?)?;
        Ok(self.push(Value::Real(y), Op::Depthwise { x, k }, &[x, k]))
    }

    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (y, inv_std) = instance_norm_with_stats(self.real(x)?, eps);
        Ok(self.push(Value::Real(y), Op::InstanceNorm { x, inv_std }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = relu(self.real(x)?);
        Ok(self.push(Value::Real(y), Op::Relu { x }, &[x]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = sigmoid(self.real(x)?);
        Ok(self.push(Value::Real(y), Op::Sigmoid { x }, &[x]))
    }

    /// `scale * x + shift`, elementwise, on a real grid.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let y = self.real(x)?.map(|v| scale * v + shift);
        Ok(self.push(Value::Real(y), Op::Affine { x, scale }, &[x]))
    }

    /// `scale * x` on a scalar tensor.
    pub fn scale(&mut self, x: Var, scale: T) -> Result<Var> {
        let t = self.tensor(x)?;
        let data = t.data().iter().map(|&v| v * scale).collect();
        let y = Tensor::from_vec(t.dims(), data)?;
        Ok(self.push(Value::Tensor(y), Op::Affine { x, scale }, &[x]))
    }

    /// Elementwise sum of two nodes of the same kind and shape.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = match (self.value(a), self.value(b)) {
            (Value::Real(x), Value::Real(y)) => Value::Real(x.zip_map(y, |p, q| p + q)?),
            (Value::Tensor(x), Value::Tensor(y)) => {
                if x.dims() != y.dims() {
                    return Err(Error::shape("tensor add: dims differ"));
                }
                let d = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
                Value::Tensor(Tensor::from_vec(x.dims(), d)?)
            }
            (p, q) => {
                return Err(Error::Autodiff(format!(
                    "cannot add {} and {}",
                    p.kind(),
                    q.kind()
                )))
            }
        };
        Ok(self.push(y, Op::Add { a, b }, &[a, b]))
    }

    /// `x + c` for a constant real grid `c`.
    pub fn add_const(&mut self, x: Var, c: &RealGrid<T>) -> Result<Var> {
        let y = self.real(x)?.zip_map(c, |p, q| p + q)?;
        Ok(self.push(Value::Real(y), Op::AddConst { x }, &[x]))
    }

    /// `x - c` for a constant complex grid `c`.
    pub fn sub_const_complex(&mut self, x: Var, c: &ComplexGrid<T>) -> Result<Var> {
        let y = self.complex(x)?.sub(c)?;
        Ok(self.push(Value::Complex(y), Op::AddConst { x }, &[x]))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let grids: Vec<&RealGrid<T>> = parts
            .iter()
            .map(|&p| self.real(p))
            .collect::<Result<_>>()?;
        let y = RealGrid::concat_channels(&grids)?;
        Ok(self.push(
            Value::Real(y),
            Op::Concat {
                parts: parts.to_vec(),
            },
            parts,
        ))
    }

    pub fn gather(&mut self, x: Var, plan: Rc<Gather4<T>>) -> Result<Var> {
        let y = plan.apply(self.real(x)?)?;
        Ok(self.push(Value::Real(y), Op::Gather { x, plan }, &[x]))
    }

    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let y = fft2(self.real(x)?)?;
        Ok(self.push(Value::Complex(y), Op::Fft2 { x }, &[x]))
    }

    pub fn ifft2(&mut self, x: Var) -> Result<Var> {
        let y = ifft2(self.complex(x)?)?;
        Ok(self.push(Value::Real(y), Op::Ifft2 { x }, &[x]))
    }

    pub fn magnitude(&mut self, x: Var) -> Result<Var> {
        let y = magnitude(self.complex(x)?);
        Ok(self.push(Value::Real(y), Op::Magnitude { x }, &[x]))
    }

    pub fn phase(&mut self, x: Var) -> Result<Var> {
        let y = phase(self.complex(x)?);
        Ok(self.push(Value::Real(y), Op::Phase { x }, &[x]))
    }

    pub fn from_polar(&mut self, mag: Var, phase: Var) -> Result<Var> {
        let y = combine_polar(self.real(mag)?, self.real(phase)?)?;
        Ok(self.push(Value::Complex(y), Op::FromPolar { mag, phase }, &[mag, phase]))
    }

    /// Channel-mixing complex matrix product `Y[p] = (Wr + i Wi) X[p]`.
    pub fn complex_conv1x1(&mut self, x: Var, wr: Var, wi: Var) -> Result<Var> {
        let y = complex_conv1x1(self.complex(x)?, self.tensor(wr)?, self.tensor(wi)?)?;
        Ok(self.push(Value::Complex(y), Op::ComplexConv1x1 { x, wr, wi }, &[x, wr, wi]))
    }

    /// Mean absolute value of a real grid, as a scalar.
    pub fn abs_mean(&mut self, x: Var) -> Result<Var> {
        let g = self.real(x)?;
        let s: f64 = g.data().iter().map(|v| v.abs().as_f64()).sum();
        let y = Tensor::scalar(T::of(s / g.len() as f64));
        Ok(self.push(Value::Tensor(y), Op::AbsMean { x }, &[x]))
    }

    /// Mean of a real grid, as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let g = self.real(x)?;
        let s: f64 = g.data().iter().map(|v| v.as_f64()).sum();
        let y = Tensor::scalar(T::of(s / g.len() as f64));
        Ok(self.push(Value::Tensor(y), Op::Mean { x }, &[x]))
    }

    /// Inner product with a constant of the same kind and shape
    /// (`Σ re·c_re + im·c_im` for complex grids), as a scalar.
    pub fn dot(&mut self, x: Var, c: Value<T>) -> Result<Var> {
        let s: f64 = match (self.value(x), &c) {
            (Value::Real(a), Value::Real(b)) => {
                a.ensure_same_dims(b, "dot")?;
                a.data().iter().zip(b.data()).map(|(p, q)| (*p * *q).as_f64()).sum()
            }
            (Value::Complex(a), Value::Complex(b)) => {
                a.ensure_same_dims(b, "dot")?;
                let re: f64 = a.re.iter().zip(&b.re).map(|(p, q)| (*p * *q).as_f64()).sum();
                let im: f64 = a.im.iter().zip(&b.im).map(|(p, q)| (*p * *q).as_f64()).sum();
                re + im
            }
            (Value::Tensor(a), Value::Tensor(b)) if a.dims() == b.dims() => {
                a.data().iter().zip(b.data()).map(|(p, q)| (*p * *q).as_f64()).sum()
            }
            (p, q) => {
                return Err(Error::Autodiff(format!(
                    "cannot dot {} with {}",
                    p.kind(),
                    q.kind()
                )))
            }
        };
        Ok(self.push(Value::Tensor(Tensor::scalar(T::of(s))), Op::Dot { x, c }, &[x]))
    }

    /// View a tensor node holding `h*w*c` values as a real grid.
    pub fn as_grid(&mut self, x: Var, h: usize, w: usize, c: usize) -> Result<Var> {
        let data = self.tensor(x)?.data().to_vec();
        let y = RealGrid::from_vec(h, w, c, data)?;
        Ok(self.push(Value::Real(y), Op::AsGrid { x }, &[x]))
    }

    /// Keys and nodes of every registered parameter, in registration order.
    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    /// Reverse sweep from a scalar `loss`, returning the gradient of every
    /// node that depends on a parameter.
    pub fn gradients(&self, loss: Var) -> Result<NodeGrads<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Autodiff("backward on an empty tape".into()));
        }
        match &self.nodes[loss.0].value {
            Value::Tensor(t) if t.len() == 1 => {}
            other => {
                return Err(Error::Autodiff(format!(
                    "loss must be a scalar, found {}",
                    other.kind()
                )))
            }
        }
        let mut grads: Vec<Option<Value<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Value::Tensor(Tensor::scalar(T::one())));
        let mut keep: Vec<Option<Value<T>>> = (0..self.nodes.len()).map(|_| None).collect();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads)?;
            if matches!(node.op, Op::Param) {
                keep[i] = Some(g);
            }
        }
        Ok(NodeGrads { grads: keep })
    }

    fn accumulate(&self, grads: &mut [Option<Value<T>>], v: Var, contribution: Value<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop(&self, i: usize, g: &Value<T>, grads: &mut [Option<Value<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Conv1x1 { x, w, b } => {
                let g = as_real(g);
                let xv = self.real(*x)?;
                let wv = self.tensor(*w)?;
                let (h, wd, cin) = xv.dims();
                let cout = g.channels();
                let p = h * wd;
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); p * cin];
                    T::gemm(
                        p, cout, cin, T::one(), g.data(), cout as isize, 1, wv.data(),
                        cin as isize, 1, T::zero(), &mut dx, cin as isize, 1,
                    );
                    self.accumulate(grads, *x, Value::Real(RealGrid::from_vec(h, wd, cin, dx)?));
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); cout * cin];
                    T::gemm(
                        cout, p, cin, T::one(), g.data(), 1, cout as isize, xv.data(),
                        cin as isize, 1, T::zero(), &mut dw, cin as isize, 1,
                    );
                    self.accumulate(grads, *w, Value::Tensor(Tensor::from_vec(&[cout, cin], dw)?));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, Value::Tensor(channel_sums(g)));
                }
            }
            Op::Conv3x3 { x, w, b, col } => {
                let g = as_real(g);
                let (h, wd, cin) = self.real(*x)?.dims();
                let wv = self.tensor(*w)?;
                let cout = g.channels();
                let p = h * wd;
                let k = 9 * cin;
                if self.needs(*x) {
                    let mut dcol = vec![T::zero(); p * k];
                    T::gemm(
                        p, cout, k, T::one(), g.data(), cout as isize, 1, wv.data(), k as isize,
                        1, T::zero(), &mut dcol, k as isize, 1,
                    );
                    self.accumulate(grads, *x, Value::Real(col2im3x3(&dcol, h, wd, cin)));
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); cout * k];
                    T::gemm(
                        cout, p, k, T::one(), g.data(), 1, cout as isize, col, k as isize, 1,
                        T::zero(), &mut dw, k as isize, 1,
                    );
                    self.accumulate(
                        grads,
                        *w,
                        Value::Tensor(Tensor::from_vec(&[cout, cin, 3, 3], dw)?),
                    );
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, Value::Tensor(channel_sums(g)));
                }
            }
            Op::Depthwise { x, k } => {
                let g = as_real(g);
                let xv = self.real(*x)?;
                let kv = self.tensor(*k)?;
                let (dx, dk) = depthwise_backward(xv, kv, g, self.needs(*x));
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Value::Real(dx));
                }
                if self.needs(*k) {
                    self.accumulate(grads, *k, Value::Tensor(dk));
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let g = as_real(g);
                let y = as_real(&node.value);
                let c = y.channels();
                let n = y.pixels() as f64;
                let mut mean_g = vec![0.0f64; c];
                let mut mean_gy = vec![0.0f64; c];
                for (gp, yp) in g.data().chunks_exact(c).zip(y.data().chunks_exact(c)) {
                    for ch in 0..c {
                        mean_g[ch] += gp[ch].as_f64();
                        mean_gy[ch] += (gp[ch] * yp[ch]).as_f64();
                    }
                }
                let mean_g: Vec<T> = mean_g.iter().map(|s| T::of(s / n)).collect();
                let mean_gy: Vec<T> = mean_gy.iter().map(|s| T::of(s / n)).collect();
                let mut dx = g.clone();
                for (dp, yp) in dx.data_mut().chunks_exact_mut(c).zip(y.data().chunks_exact(c)) {
                    for ch in 0..c {
                        dp[ch] = inv_std[ch] * (dp[ch] - mean_g[ch] - yp[ch] * mean_gy[ch]);
                    }
                }
                self.accumulate(grads, *x, Value::Real(dx));
            }
            Op::Relu { x } => {
                let g = as_real(g);
                let xv = self.real(*x)?;
                let dx = g.zip_map(xv, |gv, xv| if xv > T::zero() { gv } else { T::zero() })?;
                self.accumulate(grads, *x, Value::Real(dx));
            }
            Op::Sigmoid { x } => {
                let g = as_real(g);
                let y = as_real(&node.value);
                let dx = g.zip_map(y, |gv, yv| gv * yv * (T::one() - yv))?;
                self.accumulate(grads, *x, Value::Real(dx));
            }
            Op::Affine { x, scale } => {
                let s = *scale;
                let dx = match g {
                    Value::Real(g) => Value::Real(g.map(|v| v * s)),
                    Value::Tensor(t) => {
                        let d = t.data().iter().map(|&v| v * s).collect();
                        Value::Tensor(Tensor::from_vec(t.dims(), d)?)
                    }
                    Value::Complex(_) => unreachable!("affine is real-valued"),
                };
                self.accumulate(grads, *x, dx);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddConst { x } => {
                self.accumulate(grads, *x, g.clone());
            }
            Op::Concat { parts } => {
                let g = as_real(g);
                let sizes: Vec<usize> = parts
                    .iter()
                    .map(|&p| self.real(p).map(|r| r.channels()))
                    .collect::<Result<_>>()?;
                for (&p, piece) in parts.iter().zip(g.split_channels(&sizes)?) {
                    self.accumulate(grads, p, Value::Real(piece));
                }
            }
            Op::Gather { x, plan } => {
                self.accumulate(grads, *x, Value::Real(plan.adjoint(as_real(g))));
            }
            Op::Fft2 { x } => {
                let dx = fft2_adjoint(as_complex(g))?;
                self.accumulate(grads, *x, Value::Real(dx));
            }
            Op::Ifft2 { x } => {
                let g = as_real(g);
                let n = T::of(g.pixels() as f64);
                let dx = fft2(g)?.scale(T::one() / n);
                self.accumulate(grads, *x, Value::Complex(dx));
            }
            Op::Magnitude { x } => {
                let g = as_real(g);
                let z = self.complex(*x)?;
                let a = as_real(&node.value);
                let eps = T::of(POLAR_GRAD_EPS);
                let mut dx = ComplexGrid::zeros(z.height, z.width, z.channels);
                for k in 0..z.len() {
                    let m = a.data()[k];
                    if m >= eps {
                        let s = g.data()[k] / m;
                        dx.re[k] = s * z.re[k];
                        dx.im[k] = s * z.im[k];
                    }
                }
                self.accumulate(grads, *x, Value::Complex(dx));
            }
            Op::Phase { x } => {
                let g = as_real(g);
                let z = self.complex(*x)?;
                let eps = T::of(POLAR_GRAD_EPS);
                let mut dx = ComplexGrid::zeros(z.height, z.width, z.channels);
                for k in 0..z.len() {
                    let (re, im) = (z.re[k], z.im[k]);
                    let m = re.hypot(im);
                    if m >= eps {
                        let s = g.data()[k] / (m * m);
                        dx.re[k] = -s * im;
                        dx.im[k] = s * re;
                    }
                }
                self.accumulate(grads, *x, Value::Complex(dx));
            }
            Op::FromPolar { mag, phase } => {
                let g = as_complex(g);
                let out = as_complex(&node.value);
                let (h, w, c) = out.dims();
                if self.needs(*mag) {
                    let pv = self.real(*phase)?;
                    let mut dm = RealGrid::zeros(h, w, c);
                    for (k, d) in dm.data_mut().iter_mut().enumerate() {
                        let (s, co) = pv.data()[k].sin_cos();
                        *d = g.re[k] * co + g.im[k] * s;
                    }
                    self.accumulate(grads, *mag, Value::Real(dm));
                }
                if self.needs(*phase) {
                    let mut dp = RealGrid::zeros(h, w, c);
                    for (k, d) in dp.data_mut().iter_mut().enumerate() {
                        *d = g.im[k] * out.re[k] - g.re[k] * out.im[k];
                    }
                    self.accumulate(grads, *phase, Value::Real(dp));
                }
            }
            Op::ComplexConv1x1 { x, wr, wi } => {
                let g = as_complex(g);
                let xv = self.complex(*x)?;
                let wrv = self.tensor(*wr)?;
                let wiv = self.tensor(*wi)?;
                let (h, wd, cin) = xv.dims();
                let cout = g.channels;
                let p = h * wd;
                let (ci, co) = (cin as isize, cout as isize);
                if self.needs(*x) {
                    let mut dxr = vec![T::zero(); p * cin];
                    let mut dxi = vec![T::zero(); p * cin];
                    // dXr = dYr Wr + dYi Wi ; dXi = dYi Wr - dYr Wi
                    T::gemm(p, cout, cin, T::one(), &g.re, co, 1, wrv.data(), ci, 1, T::zero(), &mut dxr, ci, 1);
                    T::gemm(p, cout, cin, T::one(), &g.im, co, 1, wiv.data(), ci, 1, T::one(), &mut dxr, ci, 1);
                    T::gemm(p, cout, cin, T::one(), &g.im, co, 1, wrv.data(), ci, 1, T::zero(), &mut dxi, ci, 1);
                    T::gemm(p, cout, cin, -T::one(), &g.re, co, 1, wiv.data(), ci, 1, T::one(), &mut dxi, ci, 1);
                    self.accumulate(
                        grads,
                        *x,
                        Value::Complex(ComplexGrid {
                            height: h,
                            width: wd,
                            channels: cin,
                            re: dxr,
                            im: dxi,
                        }),
                    );
                }
                if self.needs(*wr) {
                    // dWr = dYr^T Xr + dYi^T Xi
                    let mut d = vec![T::zero(); cout * cin];
                    T::gemm(cout, p, cin, T::one(), &g.re, 1, co, &xv.re, ci, 1, T::zero(), &mut d, ci, 1);
                    T::gemm(cout, p, cin, T::one(), &g.im, 1, co, &xv.im, ci, 1, T::one(), &mut d, ci, 1);
                    self.accumulate(grads, *wr, Value::Tensor(Tensor::from_vec(&[cout, cin], d)?));
                }
                if self.needs(*wi) {
                    // dWi = dYi^T Xr - dYr^T Xi
                    let mut d = vec![T::zero(); cout * cin];
                    T::gemm(cout, p, cin, T::one(), &g.im, 1, co, &xv.re, ci, 1, T::zero(), &mut d, ci, 1);
                    T::gemm(cout, p, cin, -T::one(), &g.re, 1, co, &xv.im, ci, 1, T::one(), &mut d, ci, 1);
                    self.accumulate(grads, *wi, Value::Tensor(Tensor::from_vec(&[cout, cin], d)?));
                }
            }
            Op::AbsMean { x } => {
                let s = as_tensor(g).data()[0];
                let xv = self.real(*x)?;
                let k = s / T::of(xv.len() as f64);
                let dx = xv.map(|v| {
                    if v > T::zero() {
                        k
                    } else if v < T::zero() {
                        -k
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, *x, Value::Real(dx));
            }
            Op::Mean { x } => {
                let s = as_tensor(g).data()[0];
                let xv = self.real(*x)?;
                let k = s / T::of(xv.len() as f64);
                let (h, w, c) = xv.dims();
                self.accumulate(grads, *x, Value::Real(RealGrid::filled(h, w, c, k)));
            }
            Op::Dot { x, c } => {
                let s = as_tensor(g).data()[0];
                let dx = match c {
                    Value::Real(c) => Value::Real(c.map(|v| v * s)),
                    Value::Complex(c) => Value::Complex(c.scale(s)),
                    Value::Tensor(c) => {
                        let d = c.data().iter().map(|&v| v * s).collect();
                        Value::Tensor(Tensor::from_vec(c.dims(), d)?)
                    }
                };
                self.accumulate(grads, *x, dx);
            }
            Op::AsGrid { x } => {
                let dims = self.tensor(*x)?.dims().to_vec();
                let d = as_real(g).data().to_vec();
                self.accumulate(grads, *x, Value::Tensor(Tensor::from_vec(&dims, d)?));
            }
        }
        Ok(())
    }
}

fn as_real<T>(v: &Value<T>) -> &RealGrid<T> {
    match v {
        Value::Real(g) => g,
        _ => unreachable!("gradient kind always matches its node kind"),
    }
}

fn as_complex<T>(v: &Value<T>) -> &ComplexGrid<T> {
    match v {
        Value::Complex(g) => g,
        _ => unreachable!("gradient kind always matches its node kind"),
    }
}

fn as_tensor<T>(v: &Value<T>) -> &Tensor<T> {
    match v {
        Value::Tensor(t) => t,
        _ => unreachable!("gradient kind always matches its node kind"),
    }
}

fn channel_sums<T: Scalar>(g: &RealGrid<T>) -> Tensor<T> {
    let c = g.channels();
    let mut s = vec![T::zero(); c];
    for px in g.data().chunks_exact(c) {
        add_slices(&mut s, px);
    }
    Tensor::from_vec(&[c], s).expect("bias gradient shape")
}

fn depthwise_backward<T: Scalar>(
    x: &RealGrid<T>,
    k: &Tensor<T>,
    g: &RealGrid<T>,
    want_dx: bool,
) -> (Option<RealGrid<T>>, Tensor<T>) {
    let (h, w, c) = x.dims();
    let kd = k.data();
    let mut taps = vec![T::zero(); 9 * c];
    for ch in 0..c {
        for t in 0..9 {
            taps[t * c + ch] = kd[ch * 9 + t];
        }
    }
    let mut dtaps = vec![T::zero(); 9 * c];
    let mut dx = if want_dx {
        Some(RealGrid::zeros(h, w, c))
    } else {
        None
    };
    let xd = x.data();
    let gd = g.data();
    for i in 0..h {
        for dy in 0..3 {
            let si = reflect(i as isize + dy as isize - 1, h);
            for j in 0..w {
                let gp = &gd[(i * w + j) * c..(i * w + j + 1) * c];
                for dx_ in 0..3 {
                    let sj = reflect(j as isize + dx_ as isize - 1, w);
                    let t = dy * 3 + dx_;
                    let src = &xd[(si * w + sj) * c..(si * w + sj + 1) * c];
                    let dt = &mut dtaps[t * c..(t + 1) * c];
                    for ((d, &s), &gv) in dt.iter_mut().zip(src).zip(gp) {
                        *d += s * gv;
                    }
                    if let Some(dx) = dx.as_mut() {
                        let tap = &taps[t * c..(t + 1) * c];
                        let dst = &mut dx.data_mut()[(si * w + sj) * c..(si * w + sj + 1) * c];
                        for ((d, &kv), &gv) in dst.iter_mut().zip(tap).zip(gp) {
                            *d += kv * gv;
                        }
                    }
                }
            }
        }
    }
    let mut dk = vec![T::zero(); 9 * c];
    for ch in 0..c {
        for t in 0..9 {
            dk[ch * 9 + t] = dtaps[t * c + ch];
        }
    }
    (dx, Tensor::from_vec(&[c, 3, 3], dk).expect("kernel gradient shape"))
}

/// `Y[p] = (Wr + i Wi) X[p]` with `Wr`, `Wi` shaped `[c_out, c_in]`.
pub fn complex_conv1x1<T: Scalar>(
    x: &ComplexGrid<T>,
    wr: &Tensor<T>,
    wi: &Tensor<T>,
) -> Result<ComplexGrid<T>> {
    let (h, w, cin) = x.dims();
    let cout = *wr.dims().first().unwrap_or(&0);
    if wr.dims() != [cout, cin] || wi.dims() != [cout, cin] {
        return Err(Error::shape(format!(
            "complex conv weights must be [{cout}, {cin}], got {:?} / {:?}",
            wr.dims(),
            wi.dims()
        )));
    }
    let p = h * w;
    let (ci, co) = (cin as isize, cout as isize);
    let mut re = vec![T::zero(); p * cout];
    let mut im = vec![T::zero(); p * cout];
    // Yr = Xr Wr^T - Xi Wi^T ; Yi = Xi Wr^T + Xr Wi^T
    T::gemm(p, cin, cout, T::one(), &x.re, ci, 1, wr.data(), 1, ci, T::zero(), &mut re, co, 1);
    T::gemm(p, cin, cout, -T::one(), &x.im, ci, 1, wi.data(), 1, ci, T::one(), &mut re, co, 1);
    T::gemm(p, cin, cout, T::one(), &x.im, ci, 1, wr.data(), 1, ci, T::zero(), &mut im, co, 1);
    T::gemm(p, cin, cout, T::one(), &x.re, ci, 1, wi.data(), 1, ci, T::one(), &mut im, co, 1);
    Ok(ComplexGrid {
        height: h,
        width: w,
        channels: cout,
        re,
        im,
    })
}
