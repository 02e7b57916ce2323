//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every value produced during a forward pass together
//! with the [`Function`] that produced it. Nodes are appended in evaluation
//! order, so walking the tape backwards is a valid reverse topological order.

use std::collections::BTreeMap;

use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A differentiable operation.
pub trait Function: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;

    /// Vector-Jacobian products for each input; `needs[i] == false` lets the
    /// implementation skip input `i` by returning `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_out: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    func: Option<Box<dyn Function>>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Graph handles for a bound [`ModelParams`], keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Usage(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, inputs: Vec<Var>, func: Option<Box<dyn Function>>, rg: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs,
            func,
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (no gradient is tracked for it).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    /// Records a trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, true)
    }

    /// Binds every tensor of `params` as a trainable leaf.
    pub fn bind(&mut self, params: &ModelParams) -> ParamVars {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), self.leaf(t.clone())))
            .collect();
        ParamVars { vars }
    }

    /// Binds `params` as constants (frozen network).
    pub fn bind_frozen(&mut self, params: &ModelParams) -> ParamVars {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), self.input(t.clone())))
            .collect();
        ParamVars { vars }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies `func` to `inputs` and records the result.
    pub fn apply(&mut self, func: Box<dyn Function>, inputs: &[Var]) -> Result<Var> {
        let value = {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            func.forward(&vals)?
        };
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, inputs.to_vec(), Some(func), rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(func) = node.func.as_ref() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let vals: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = func.backward(&vals, &node.value, &g, &needs);
            for ((inp, ig), need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                let (Some(ig), true) = (ig, *need) else {
                    continue;
                };
                match &mut grads[inp.0] {
                    Some(existing) => existing.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a leaf; `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients shaped like `params`, zero for parameters the loss ignores.
    pub fn collect(&self, graph: &Graph, vars: &ParamVars) -> ModelParams {
        let mut out = ModelParams::new();
        for (name, v) in vars.iter() {
            let g = self
                .wrt(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(graph.value(*v).shape()));
            out.insert(name.clone(), g);
        }
        out
    }
}
