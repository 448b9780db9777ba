use std::cell::RefCell;
use std::collections::HashMap;

use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Backward rule of a recorded operation: maps the gradient of the output to
/// one optional gradient per parent, in parent order.
pub type BackwardFn<F> = Box<dyn FnOnce(&Tensor<F>) -> Vec<Option<Tensor<F>>>>;

struct Node<F: Scalar> {
    op: &'static str,
    value: Tensor<F>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<F>>,
    param: Option<ParamId>,
}

/// Record of the operations of one forward pass.
///
/// Nodes are appended in execution order, so the record is topologically
/// sorted by construction. A graph created with [`Graph::inference`] keeps
/// values but drops backward rules.
pub struct Graph<F: Scalar> {
    nodes: RefCell<Vec<Node<F>>>,
    params: RefCell<HashMap<ParamId, usize>>,
    recording: bool,
}

/// Handle to a value recorded in a [`Graph`].
pub struct Var<'g, F: Scalar> {
    graph: &'g Graph<F>,
    id: usize,
}

impl<F: Scalar> Clone for Var<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F: Scalar> Copy for Var<'_, F> {}

impl<F: Scalar> std::fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.shape())
    }
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            recording: true,
        }
    }

    /// A graph that does not retain backward rules.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives no gradient.
    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.push_node(Node {
            op: "constant",
            value,
            parents: Vec::new(),
            backward: None,
            param: None,
        })
    }

    /// The leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&self, store: &ParamStore<F>, id: ParamId) -> Var<'_, F> {
        if let Some(&node) = self.params.borrow().get(&id) {
            return Var {
                graph: self,
                id: node,
            };
        }
        let var = self.push_node(Node {
            op: "param",
            value: store.value(id).clone(),
            parents: Vec::new(),
            backward: None,
            param: Some(id),
        });
        self.params.borrow_mut().insert(id, var.id);
        var
    }

    /// Records an operation with a caller-supplied backward rule.
    ///
    /// `backward` must return exactly one entry per parent; `None` means no
    /// gradient flows to that parent.
    pub fn custom<'g>(
        &'g self,
        op: &'static str,
        parents: &[Var<'g, F>],
        value: Tensor<F>,
        backward: impl FnOnce(&Tensor<F>) -> Vec<Option<Tensor<F>>> + 'static,
    ) -> Var<'g, F> {
        let backward: Option<BackwardFn<F>> = if self.recording {
            Some(Box::new(backward))
        } else {
            None
        };
        self.push_node(Node {
            op,
            value,
            parents: parents.iter().map(|p| p.id).collect(),
            backward,
            param: None,
        })
    }

    fn push_node(&self, node: Node<F>) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Tensor<F> {
        self.nodes.borrow()[id].value.clone()
    }

    /// First recorded node holding a NaN or infinity, with its op name.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op))
    }

    /// Errors with the first non-finite node, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((node, op)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    /// Back-propagates from a scalar `loss`. Backward rules are consumed, so a
    /// graph supports one backward pass.
    pub fn backward(&self, loss: Var<'_, F>, store: &ParamStore<F>) -> Result<Gradients<F>> {
        let mut nodes = self.nodes.borrow_mut();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::ones(loss_value.shape().to_vec()));
        let mut out = Gradients {
            grads: vec![None; store.len()],
        };
        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &mut nodes[id];
            if let Some(pid) = node.param {
                accumulate(&mut out.grads[pid.0], grad)?;
                continue;
            }
            let Some(rule) = node.backward.take() else {
                continue;
            };
            let parents = node.parents.clone();
            let parent_grads = rule(&grad);
            debug_assert_eq!(parent_grads.len(), parents.len(), "op {}", node.op);
            for (pid, g) in parents.into_iter().zip(parent_grads) {
                if let Some(g) = g {
                    accumulate(&mut grads[pid], g)?;
                }
            }
        }
        for (id, p) in store.iter() {
            if out.grads[id.0].is_none() {
                out.grads[id.0] = Some(p.value.zeros_like());
            }
        }
        Ok(out)
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<Tensor<F>>, g: Tensor<F>) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

impl<'g, F: Scalar> Var<'g, F> {
    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor<F> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn dims4(&self) -> Result<[usize; 4]> {
        self.value().dims4()
    }
}

/// Gradients of a loss with respect to every parameter of a store.
/// Parameters the loss does not reach hold zeros.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        self.grads[id.0]
            .as_ref()
            .expect("gradients are filled for every parameter")
    }

    pub fn by_name<'a>(&'a self, store: &'a ParamStore<F>) -> Vec<(&'a str, &'a Tensor<F>)> {
        store
            .iter()
            .map(|(id, p)| (p.name.as_str(), self.get(id)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: F) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::is_finite)
    }

    /// Writes the gradients into each parameter's `grad` slot.
    pub fn store_into(&self, store: &mut ParamStore<F>) {
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).grad = self.grads[id.0].clone();
        }
    }
}
