//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Ops evaluate eagerly and push a node holding their value plus a closure
//! mapping the output gradient to input gradients. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and
//! `backward` is a single reverse sweep.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Maps the gradient of a node's output to gradients of its inputs.
///
/// The mask marks which inputs need a gradient; entries for the others may
/// be `None` so expensive terms can be skipped.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, node: Node) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push_node(Node {
            value,
            requires_grad: true,
            inputs: Vec::new(),
            backward: None,
        })
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_node(Node {
            value,
            requires_grad: false,
            inputs: Vec::new(),
            backward: None,
        })
    }

    /// Records an op result. The closure is dropped when no input needs a gradient.
    pub fn push(&self, value: Tensor, inputs: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.0].requires_grad)
        };
        self.push_node(Node {
            value,
            requires_grad,
            inputs: inputs.iter().map(|v| v.0).collect(),
            backward: requires_grad.then_some(backward),
        })
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Value copied onto a fresh constant node, cutting gradient flow.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value(v);
        self.constant(value)
    }

    /// Gradients of a scalar `loss` with respect to every node that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let seed = Tensor::from_parts(shape, vec![1.0]);
        self.backward_with_seed(loss, seed)
    }

    /// Vector–Jacobian product seeded with `seed` at `output`.
    pub fn backward_with_seed(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out_shape = nodes[output.0].value.shape();
        if seed.shape() != out_shape {
            return Err(Error::dim("backward seed", seed.shape(), out_shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        if !nodes[output.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(seed);
        for id in (0..=output.0).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let mask: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let input_grads = backward(&grad, &mask);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for ((&input, g), needed) in node.inputs.iter().zip(input_grads).zip(mask) {
                let Some(g) = g else { continue };
                if !needed {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[input].value.shape());
                grads[input] = Some(match grads[input].take() {
                    None => g,
                    Some(acc) => accumulate(acc, &g),
                });
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(acc: Tensor, g: &Tensor) -> Tensor {
    let shape = acc.shape().to_vec();
    let mut data = acc.into_vec();
    for (a, b) in data.iter_mut().zip(g.data()) {
        *a += b;
    }
    Tensor::from_parts(shape, data)
}

/// Result of a backward sweep. Only leaf gradients are retained.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not reach the loss.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::from_parts(shape.to_vec(), vec![0.0; shape.iter().product()]))
    }
}
