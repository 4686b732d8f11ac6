//! Multilayer-perceptron forward passes over the autodiff graph.
//!
//! Parameters follow the `w0, b0, w1, b1, ...` naming convention produced by
//! [`crate::tensor::init_mlp_params`]. The activation is applied between
//! layers, not after the last one; output heads add their own transforms.

use crate::error::{Result, RisError};
use crate::graph::{Graph, NodeId};
use crate::tensor::{ParameterSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// Leaf bindings for one parameter set inside one graph, used to route
/// gradients back into the owning `ParameterSet` after `backward`.
pub struct BoundParams {
    entries: Vec<(usize, NodeId)>,
    tracked: bool,
}

/// Inserts every tensor of `params` into the graph as a leaf. With
/// `tracked = false` the parameters act as constants: the reverse sweep will
/// not descend into them, which is how target networks, EMA copies, and
/// frozen critics participate in losses without leaking gradients.
pub fn bind_params(g: &mut Graph, params: &ParameterSet, tracked: bool) -> BoundParams {
    let mut entries = Vec::with_capacity(params.len());
    for idx in 0..params.len() {
        let (_, t) = params.at(idx);
        let rows = t.shape[0];
        let cols = if t.shape.len() > 1 { t.shape[1] } else { 1 };
        let id = g.leaf(rows, cols, &t.data, tracked);
        entries.push((idx, id));
    }
    BoundParams { entries, tracked }
}

impl BoundParams {
    pub fn node(&self, params: &ParameterSet, name: &str) -> Option<NodeId> {
        let idx = params.index_of(name)?;
        self.entries
            .iter()
            .find(|(i, _)| *i == idx)
            .map(|(_, id)| *id)
    }

    /// Adds the graph gradients of every bound leaf into the gradient
    /// buffers of `params`. Call after `Graph::backward`; repeated calls
    /// accumulate until the caller resets with `zero_grads`.
    pub fn accumulate_grads(&self, g: &Graph, params: &mut ParameterSet) {
        if !self.tracked {
            return;
        }
        for (idx, node) in &self.entries {
            if let Some(src) = g.grad(*node) {
                let (_, tensor) = params.at_mut(*idx);
                let dst = tensor.grad_mut();
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += *s;
                }
            }
        }
    }
}

/// Affine-activation chain through `params` starting at `input`.
/// `hidden` gives the expected hidden widths and is validated against the
/// parameter shapes; the output width comes from the last weight tensor.
pub fn mlp_forward_graph(
    g: &mut Graph,
    params: &ParameterSet,
    bound: &BoundParams,
    input: NodeId,
    hidden: &[usize],
    activation: Activation,
) -> Result<NodeId> {
    let layers = hidden.len() + 1;
    if params.len() != 2 * layers {
        return Err(RisError::Config(format!(
            "mlp expects {} tensors for {} layers, parameter set has {}",
            2 * layers,
            layers,
            params.len()
        )));
    }
    let mut x = input;
    let mut width = g.cols(input);
    for l in 0..layers {
        let w_name = format!("w{l}");
        let b_name = format!("b{l}");
        let (w_t, b_t) = match (params.get(&w_name), params.get(&b_name)) {
            (Some(w), Some(b)) => (w, b),
            _ => {
                return Err(RisError::Config(format!(
                    "mlp layer {l}: missing {w_name:?}/{b_name:?}"
                )))
            }
        };
        if w_t.shape.len() != 2 || w_t.shape[0] != width {
            return Err(RisError::Config(format!(
                "mlp layer {l}: weight shape {:?} does not accept input width {width}",
                w_t.shape
            )));
        }
        let out_width = w_t.shape[1];
        if l < hidden.len() && out_width != hidden[l] {
            return Err(RisError::Config(format!(
                "mlp layer {l}: weight output {out_width} != declared hidden size {}",
                hidden[l]
            )));
        }
        if b_t.len() != out_width {
            return Err(RisError::Config(format!(
                "mlp layer {l}: bias length {} != layer width {out_width}",
                b_t.len()
            )));
        }
        let w = bound.node(params, &w_name).expect("bound above");
        let b = bound.node(params, &b_name).expect("bound above");
        let z = g.matmul(x, w);
        let z = g.add_row_bias(z, b);
        x = if l + 1 < layers {
            match activation {
                Activation::Relu => g.relu(z),
                Activation::Tanh => g.tanh(z),
            }
        } else {
            z
        };
        width = out_width;
    }
    Ok(x)
}

/// Convenience wrapper matching the plain tensor-in/tensor-out shape: builds
/// a throwaway graph, runs the chain, and returns the output tensor.
pub fn mlp_forward(
    params: &ParameterSet,
    input: &Tensor,
    hidden: &[usize],
    activation: Activation,
) -> Result<Tensor> {
    if input.shape.len() != 2 {
        return Err(RisError::Config(format!(
            "mlp input must be [batch, dim], got {:?}",
            input.shape
        )));
    }
    let mut g = Graph::new();
    let bound = bind_params(&mut g, params, false);
    let x = g.leaf(input.shape[0], input.shape[1], &input.data, false);
    let out = mlp_forward_graph(&mut g, params, &bound, x, hidden, activation)?;
    Tensor::from_vec(&[g.rows(out), g.cols(out)], g.value(out).to_vec())
}
