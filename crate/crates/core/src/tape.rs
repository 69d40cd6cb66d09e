//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a [`Node`] holding its output value, the ids of
//! its parents and whatever context its backward rule needs. Parents always
//! precede their children, so walking the tape backwards is a valid
//! topological order.

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds with their saved backward context.
#[derive(Debug, Clone)]
pub enum Op<T> {
    Leaf,
    Conv2d { has_bias: bool },
    MaxPool2x2 { argmax: Vec<u32> },
    Upsample2x2,
    /// Axis-0 concatenation; `split` is the leading extent of the first input.
    Concat { split: usize },
    Slice { start: usize },
    Add,
    Mul,
    Scale(T),
    Elu,
    Tanh,
    Sigmoid,
    HardSigmoid,
    Sum,
    /// Smoothed soft Dice between probabilities and a fixed binary mask.
    DiceDistance { mask: Tensor<T>, smooth: T },
}

impl<T> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2x2 { .. } => "maxpool2x2",
            Op::Upsample2x2 => "upsample2x2",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Elu => "elu",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::HardSigmoid => "hard_sigmoid",
            Op::Sum => "sum",
            Op::DiceDistance { .. } => "dice_distance",
        }
    }
}

#[derive(Debug)]
pub struct Node<T> {
    pub op: Op<T>,
    pub parents: Vec<Var>,
    pub value: Tensor<T>,
    pub requires_grad: bool,
}

/// Records a computation for later differentiation. A tape is used by one
/// thread at a time; independent passes use independent tapes.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every node it depends on.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[inline]
fn hard_sigmoid<T: Scalar>(v: T) -> T {
    let y = T::from_f64(0.2) * v + T::from_f64(0.5);
    if y < T::ZERO {
        T::ZERO
    } else if y > T::ONE {
        T::ONE
    } else {
        y
    }
}

#[inline]
fn elu<T: Scalar>(v: T) -> T {
    if v > T::ZERO {
        v
    } else {
        v.exp() - T::ONE
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

pub fn elu_value<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(elu)
}

pub fn hard_sigmoid_value<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(hard_sigmoid)
}

pub fn sigmoid_value<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<T>, parents: Vec<Var>, value: Tensor<T>) -> Var {
        debug_assert!(parents.iter().all(|p| p.0 < self.nodes.len()));
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            op,
            parents,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable leaf (a parameter or an input whose gradient
    /// is wanted).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            parents: Vec::new(),
            value,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            parents: Vec::new(),
            value,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Same-padded cross-correlation of a `[C_in,H,W]` input with a
    /// `[C_out,C_in,kh,kw]` kernel plus an optional `[C_out]` bias.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let value = kernels::conv2d_forward(
            self.value(x),
            self.value(kernel),
            bias.map(|b| self.value(b)),
        )?;
        let mut parents = vec![x, kernel];
        parents.extend(bias);
        Ok(self.push(
            Op::Conv2d {
                has_bias: bias.is_some(),
            },
            parents,
            value,
        ))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let (value, argmax) = kernels::maxpool2x2_forward(self.value(x))?;
        Ok(self.push(Op::MaxPool2x2 { argmax }, vec![x], value))
    }

    pub fn upsample2x2(&mut self, x: Var) -> Result<Var> {
        let value = kernels::upsample2x2_forward(self.value(x))?;
        Ok(self.push(Op::Upsample2x2, vec![x], value))
    }

    /// Concatenates along axis 0 (channels for `[C,H,W]`), `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::concat0(self.value(a), self.value(b))?;
        let split = self.value(a).shape()[0];
        Ok(self.push(Op::Concat { split }, vec![a, b], value))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = kernels::slice0(self.value(x), start, len)?;
        Ok(self.push(Op::Slice { start }, vec![x], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        Ok(self.push(Op::Add, vec![a, b], value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        Ok(self.push(Op::Mul, vec![a, b], value))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(Op::Scale(factor), vec![x], value)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let value = elu_value(self.value(x));
        self.push(Op::Elu, vec![x], value)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(Scalar::tanh);
        self.push(Op::Tanh, vec![x], value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = sigmoid_value(self.value(x));
        self.push(Op::Sigmoid, vec![x], value)
    }

    pub fn hard_sigmoid(&mut self, x: Var) -> Var {
        let value = hard_sigmoid_value(self.value(x));
        self.push(Op::HardSigmoid, vec![x], value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum, vec![x], value)
    }

    /// `2·(Σ χ·p + s) / (Σ (χ + p) + s)` for probabilities `p` and a binary
    /// mask `χ` of the same shape.
    pub fn dice_distance(&mut self, probs: Var, mask: &Tensor<T>, smooth: T) -> Result<Var> {
        let p = self.value(probs);
        p.expect_same_shape(mask, "dice_distance")?;
        let (num, den) = dice_sums(p, mask, smooth);
        let value = Tensor::scalar(T::from_f64(2.0) * num / den);
        Ok(self.push(
            Op::DiceDistance {
                mask: mask.clone(),
                smooth,
            },
            vec![probs],
            value,
        ))
    }

    /// Propagates gradients from a scalar `loss` back to every node it
    /// depends on. Intermediate gradients are released once consumed; only
    /// leaves keep theirs.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::ONE));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[id].take() else {
                continue;
            };
            let contributions = self.local_backward(node, &dy)?;
            for (parent, g) in node.parents.iter().zip(contributions) {
                let Some(g) = g else { continue };
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn local_backward(&self, node: &Node<T>, dy: &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> {
        let pv = |i: usize| self.value(node.parents[i]);
        let wants = |i: usize| self.nodes[node.parents[i].0].requires_grad;
        let y = &node.value;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { has_bias } => {
                let need_bias = *has_bias;
                let need = [wants(0), wants(1), need_bias && wants(2)];
                let g = kernels::conv2d_backward(pv(0), pv(1), need_bias, dy, need)?;
                let mut v = vec![g.input, g.kernel];
                if need_bias {
                    v.push(g.bias);
                }
                v
            }
            Op::MaxPool2x2 { argmax } => {
                vec![Some(kernels::maxpool2x2_backward(pv(0).shape(), argmax, dy)?)]
            }
            Op::Upsample2x2 => vec![Some(kernels::upsample2x2_backward(dy)?)],
            Op::Concat { split } => {
                let total = dy.shape()[0];
                vec![
                    Some(kernels::slice0(dy, 0, *split)?),
                    Some(kernels::slice0(dy, *split, total - split)?),
                ]
            }
            Op::Slice { start } => {
                let x = pv(0);
                let mut g = Tensor::zeros(x.shape());
                let (_, stride) = x.leading();
                g.data_mut()[start * stride..start * stride + dy.len()]
                    .copy_from_slice(dy.data());
                vec![Some(g)]
            }
            Op::Add => vec![Some(dy.clone()), Some(dy.clone())],
            Op::Mul => vec![
                if wants(0) {
                    Some(dy.zip_map(pv(1), |g, b| g * b)?)
                } else {
                    None
                },
                if wants(1) {
                    Some(dy.zip_map(pv(0), |g, a| g * a)?)
                } else {
                    None
                },
            ],
            Op::Scale(f) => {
                let f = *f;
                vec![Some(dy.map(|g| g * f))]
            }
            Op::Elu => {
                // d/dx = 1 for x > 0, else e^x = y + 1
                let x = pv(0);
                let d = x.zip_map(y, |xv, yv| if xv > T::ZERO { T::ONE } else { yv + T::ONE })?;
                vec![Some(d.zip_map(dy, |a, b| a * b)?)]
            }
            Op::Tanh => vec![Some(y.zip_map(dy, |yv, g| g * (T::ONE - yv * yv))?)],
            Op::Sigmoid => vec![Some(y.zip_map(dy, |yv, g| g * yv * (T::ONE - yv))?)],
            Op::HardSigmoid => {
                let lo = T::from_f64(-2.5);
                let hi = T::from_f64(2.5);
                let slope = T::from_f64(0.2);
                vec![Some(pv(0).zip_map(dy, |xv, g| {
                    if xv > lo && xv < hi {
                        g * slope
                    } else {
                        T::ZERO
                    }
                })?)]
            }
            Op::Sum => {
                let g = dy.data()[0];
                vec![Some(Tensor::full(pv(0).shape(), g))]
            }
            Op::DiceDistance { mask, smooth } => {
                let p = pv(0);
                let (num, den) = dice_sums(p, mask, *smooth);
                let g = dy.data()[0];
                let two = T::from_f64(2.0);
                // d/dp_x [2 num / den] = 2 (χ_x den − num) / den²
                let scale = g * two / (den * den);
                vec![Some(mask.map(|m| scale * (m * den - num)))]
            }
        };
        Ok(out)
    }
}

pub(crate) fn dice_sums<T: Scalar>(p: &Tensor<T>, mask: &Tensor<T>, smooth: T) -> (T, T) {
    let mut inter = T::ZERO;
    let mut total = T::ZERO;
    for (&pv, &mv) in p.data().iter().zip(mask.data()) {
        inter += mv * pv;
        total += mv + pv;
    }
    (inter + smooth, total + smooth)
}

impl<T: Scalar> Tape<T> {
    /// Checks that a value tensor is a single scalar.
    pub fn scalar_value(&self, v: Var) -> Result<T> {
        let t = self.value(v);
        if t.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "expected scalar, got shape {:?}",
                t.shape()
            )));
        }
        Ok(t.data()[0])
    }
}
