//! Reverse-mode automatic differentiation over a linear tape.

use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::tensor::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var },
    ConvTranspose2d { input: Var, kernel: Var, bias: Var, stride: (usize, usize) },
    AvgPool2x2(Var),
    Relu(Var),
    Concat(Var, Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Records forward values and the operations that produced them.
///
/// A tape is confined to one thread; the kernels it calls may still split
/// work across samples internally.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
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

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let y = ops::conv2d(self.value(input), self.value(kernel), self.value(bias))?;
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        Ok(self.push(y, Op::Conv2d { input, kernel, bias }, rg))
    }

    pub fn conv_transpose2d(&mut self, input: Var, kernel: Var, bias: Var, stride: (usize, usize)) -> Result<Var> {
        let y = ops::conv_transpose2d(self.value(input), self.value(kernel), self.value(bias), stride)?;
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        Ok(self.push(
            y,
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                stride,
            },
            rg,
        ))
    }

    pub fn avgpool2x2(&mut self, input: Var) -> Result<Var> {
        let y = ops::avgpool2x2(self.value(input))?;
        let rg = self.rg(input);
        Ok(self.push(y, Op::AvgPool2x2(input), rg))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let y = ops::relu(self.value(input));
        let rg = self.rg(input);
        self.push(y, Op::Relu(input), rg)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_channels(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(y, Op::Concat(a, b), rg))
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let y = ops::mse_loss(self.value(pred), self.value(target))?;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(y, Op::Mse(pred, target), rg))
    }

    /// Back-propagates from a one-element `root`.
    ///
    /// Intermediate gradients are released as soon as they have been pushed
    /// to their inputs; only leaf gradients survive in the result.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_val = self.value(root);
        if root_val.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: format!("{:?}", root_val.shape()),
                rhs: "one-element root".to_owned(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::from_parts(root_val.shape().to_vec(), vec![T::ONE]));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { input, kernel, bias } => {
                    let cg = ops::conv2d_backward(
                        self.value(input),
                        self.value(kernel),
                        self.value(bias),
                        &g,
                        self.rg(input),
                    )?;
                    if let Some(dx) = cg.input {
                        accumulate(&mut grads, input, dx);
                    }
                    if self.rg(kernel) {
                        accumulate(&mut grads, kernel, cg.kernel);
                    }
                    if self.rg(bias) {
                        accumulate(&mut grads, bias, cg.bias);
                    }
                }
                Op::ConvTranspose2d {
                    input,
                    kernel,
                    bias,
                    stride,
                } => {
                    let cg = ops::conv_transpose2d_backward(
                        self.value(input),
                        self.value(kernel),
                        self.value(bias),
                        stride,
                        &g,
                        self.rg(input),
                    )?;
                    if let Some(dx) = cg.input {
                        accumulate(&mut grads, input, dx);
                    }
                    if self.rg(kernel) {
                        accumulate(&mut grads, kernel, cg.kernel);
                    }
                    if self.rg(bias) {
                        accumulate(&mut grads, bias, cg.bias);
                    }
                }
                Op::AvgPool2x2(input) => {
                    if self.rg(input) {
                        let dx = ops::avgpool2x2_backward(self.value(input).shape(), &g);
                        accumulate(&mut grads, input, dx);
                    }
                }
                Op::Relu(input) => {
                    if self.rg(input) {
                        let dx = ops::relu_backward(self.value(input), &g);
                        accumulate(&mut grads, input, dx);
                    }
                }
                Op::Concat(a, b) => {
                    let (ga, gb) = ops::concat_channels_backward(self.value(a).shape(), self.value(b).shape(), &g);
                    if self.rg(a) {
                        accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Mse(pred, target) => {
                    let gs = g.data()[0];
                    let (p, t) = (self.value(pred), self.value(target));
                    if self.rg(pred) {
                        accumulate(&mut grads, pred, ops::mse_loss_backward(p, t, gs));
                    }
                    if self.rg(target) {
                        accumulate(&mut grads, target, ops::mse_loss_backward(t, p, gs));
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], var: Var, g: Tensor<T>) {
    match &mut grads[var.0] {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
