use std::cell::{Ref, RefCell};
use std::fmt;

use crate::{Error, Result, Scalar, Tensor};

/// Inputs handed to an op's backward rule.
pub(crate) struct BackwardArgs<'a, T> {
    /// Gradient of the root with respect to this op's output.
    pub grad: &'a Tensor<T>,
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    /// Whether each input wants a gradient; rules may skip the others.
    pub needs: Vec<bool>,
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&BackwardArgs<'_, T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    is_leaf: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    grad: Option<Tensor<T>>,
}

/// Record of primitive operations. Node ids are assigned in creation order,
/// so every node's parents precede it.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}, shape {:?})", self.id, self.value().shape())
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            is_leaf: true,
            parents: Vec::new(),
            backward: None,
            grad: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that receives a gradient on backward.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub(crate) fn push(
        &self,
        value: Tensor<T>,
        parents: &[Var<'_, T>],
        backward: impl Fn(&BackwardArgs<'_, T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'_, T> {
        for p in parents {
            assert!(
                std::ptr::eq(p.graph, self),
                "operands belong to different graphs"
            );
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[p.id].requires_grad);
        let (parents, backward): (Vec<usize>, Option<BackwardFn<T>>) = if requires_grad {
            (parents.iter().map(|p| p.id).collect(), Some(Box::new(backward)))
        } else {
            (Vec::new(), None)
        };
        nodes.push(Node {
            value,
            requires_grad,
            is_leaf: false,
            parents,
            backward,
            grad: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Propagates gradients from a scalar root into every reachable leaf
    /// that requires them. Leaf gradients accumulate across calls; interior
    /// gradients are released as soon as they have been consumed.
    pub fn backward(&self, root: Var<'_, T>) -> Result<()> {
        assert!(std::ptr::eq(root.graph, self), "root belongs to another graph");
        let mut nodes = self.nodes.borrow_mut();
        let root_shape = nodes[root.id].value.shape().to_vec();
        if nodes[root.id].value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_shape));
        }
        if !nodes[root.id].requires_grad {
            return Ok(());
        }
        accumulate(&mut nodes[root.id], Tensor::ones(root_shape));

        for id in (0..=root.id).rev() {
            if nodes[id].is_leaf || nodes[id].grad.is_none() {
                continue;
            }
            let contributions = {
                let node = &nodes[id];
                let args = BackwardArgs {
                    grad: node.grad.as_ref().expect("checked above"),
                    inputs: node.parents.iter().map(|&p| &nodes[p].value).collect(),
                    output: &node.value,
                    needs: node.parents.iter().map(|&p| nodes[p].requires_grad).collect(),
                };
                let rule = node.backward.as_ref().expect("interior node without rule");
                rule(&args)
            };
            let parents = nodes[id].parents.clone();
            debug_assert_eq!(parents.len(), contributions.len());
            for (p, c) in parents.into_iter().zip(contributions) {
                if let Some(c) = c {
                    if nodes[p].requires_grad {
                        debug_assert_eq!(c.shape(), nodes[p].value.shape());
                        accumulate(&mut nodes[p], c);
                    }
                }
            }
            nodes[id].grad = None;
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(node: &mut Node<T>, g: Tensor<T>) {
    match &mut node.grad {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor<T>> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> T {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self) -> Option<Tensor<T>> {
        self.graph.nodes.borrow()[self.id].grad.clone()
    }

    /// Copy of this value as a new constant leaf; gradients stop here.
    pub fn detach(&self) -> Var<'g, T> {
        let v = self.value().clone();
        self.graph.constant(v)
    }
}
