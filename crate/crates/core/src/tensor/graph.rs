//! Static computation graphs over dense layers and the batched
//! forward/backward passes that every model in the crate runs on.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z.value() > 0.0 {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub(crate) fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y.value() > 0.0 {
                    T::from_f64(1.0)
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::from_f64(1.0) - y * y,
            Activation::Identity => T::from_f64(1.0),
        }
    }
}

/// Index of a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNode {
    pub src: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Offset of the `out_dim × in_dim` row-major weight block.
    pub weight_offset: usize,
    pub bias_offset: Option<usize>,
}

impl DenseNode {
    pub fn param_len(&self) -> usize {
        self.in_dim * self.out_dim + if self.bias_offset.is_some() { self.out_dim } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Input,
    Dense(DenseNode),
    /// Element-wise sum of the sources; with no sources the node emits zeros.
    Sum(Vec<usize>),
}

/// A topologically ordered DAG of dense layers and summation nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    dims: Vec<usize>,
    labels: Vec<String>,
    output: usize,
    param_count: usize,
}

/// Anything that can be run by the engine.
pub trait Model {
    fn graph(&self) -> &Graph;

    fn param_count(&self) -> usize {
        self.graph().param_count()
    }

    /// Search-space id, when the model was materialized from one.
    fn arch_id(&self) -> Option<u32> {
        None
    }
}

impl Model for Graph {
    fn graph(&self) -> &Graph {
        self
    }
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn dim(&self, node: usize) -> usize {
        self.dims[node]
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.output]
    }

    pub fn output_node(&self) -> usize {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn dense_nodes(&self) -> impl Iterator<Item = (usize, &DenseNode)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Dense(d) => Some((i, d)),
            _ => None,
        })
    }

    /// Returns true when the output node is a dense layer carrying a bias.
    pub fn has_biased_head(&self) -> bool {
        matches!(&self.nodes[self.output], Node::Dense(d) if d.bias_offset.is_some())
    }
}

/// Incremental constructor for [`Graph`]; node 0 is always the input.
#[derive(Debug)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    dims: Vec<usize>,
    labels: Vec<String>,
    param_count: usize,
}

impl GraphBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            nodes: vec![Node::Input],
            dims: vec![input_dim],
            labels: vec!["input".to_owned()],
            param_count: 0,
        }
    }

    pub fn input(&self) -> NodeId {
        NodeId(0)
    }

    pub fn dim(&self, node: NodeId) -> usize {
        self.dims[node.0]
    }

    pub fn dense(
        &mut self,
        label: impl Into<String>,
        src: NodeId,
        out_dim: usize,
        activation: Activation,
        bias: bool,
    ) -> NodeId {
        let in_dim = self.dims[src.0];
        let weight_offset = self.param_count;
        self.param_count += in_dim * out_dim;
        let bias_offset = bias.then(|| {
            let off = self.param_count;
            self.param_count += out_dim;
            off
        });
        self.push(
            label.into(),
            out_dim,
            Node::Dense(DenseNode {
                src: src.0,
                in_dim,
                out_dim,
                activation,
                weight_offset,
                bias_offset,
            }),
        )
    }

    /// Sum of `srcs`, all of which must have width `dim`.
    pub fn sum(&mut self, label: impl Into<String>, srcs: &[NodeId], dim: usize) -> Result<NodeId> {
        let label = label.into();
        for s in srcs {
            if self.dims[s.0] != dim {
                return Err(Error::DimensionMismatch {
                    what: format!("{label} (source {})", self.labels[s.0]),
                    expected: dim,
                    got: self.dims[s.0],
                });
            }
        }
        Ok(self.push(label, dim, Node::Sum(srcs.iter().map(|s| s.0).collect())))
    }

    fn push(&mut self, label: String, dim: usize, node: Node) -> NodeId {
        self.nodes.push(node);
        self.dims.push(dim);
        self.labels.push(label);
        NodeId(self.nodes.len() - 1)
    }

    pub fn finish(self, output: NodeId) -> Graph {
        Graph {
            nodes: self.nodes,
            dims: self.dims,
            labels: self.labels,
            output: output.0,
            param_count: self.param_count,
        }
    }
}

/// Node outputs of one batched forward pass, each `[n × dim]` row-major.
#[derive(Debug)]
pub(crate) struct Forward<T> {
    pub n: usize,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> Forward<T> {
    pub fn output(&self, graph: &Graph) -> &[T] {
        &self.values[graph.output]
    }
}

/// Result of back-propagating output gradients through a [`Forward`].
#[derive(Debug)]
pub(crate) struct Backward<T> {
    /// Gradient w.r.t. each node's output (`[n × dim]`; empty when unreached).
    pub node_grads: Vec<Vec<T>>,
    /// Gradient w.r.t. each dense node's pre-activation.
    pub pre_grads: Vec<Vec<T>>,
}

pub(crate) fn forward_pass<T: Scalar>(graph: &Graph, params: &[T], inputs: &[T], n: usize) -> Forward<T> {
    let mut values: Vec<Vec<T>> = Vec::with_capacity(graph.nodes.len());
    for (idx, node) in graph.nodes.iter().enumerate() {
        let dim = graph.dims[idx];
        let out = match node {
            Node::Input => inputs.to_vec(),
            Node::Dense(d) => {
                let x = &values[d.src];
                let w = &params[d.weight_offset..d.weight_offset + d.in_dim * d.out_dim];
                let mut out = vec![T::zero(); n * d.out_dim];
                for s in 0..n {
                    let xs = &x[s * d.in_dim..(s + 1) * d.in_dim];
                    let os = &mut out[s * d.out_dim..(s + 1) * d.out_dim];
                    for (o, slot) in os.iter_mut().enumerate() {
                        let row = &w[o * d.in_dim..(o + 1) * d.in_dim];
                        let mut acc = match d.bias_offset {
                            Some(b) => params[b + o],
                            None => T::zero(),
                        };
                        for (wi, xi) in row.iter().zip(xs) {
                            acc += *wi * *xi;
                        }
                        *slot = d.activation.apply(acc);
                    }
                }
                out
            }
            Node::Sum(srcs) => {
                let mut out = vec![T::zero(); n * dim];
                for &s in srcs {
                    for (o, v) in out.iter_mut().zip(&values[s]) {
                        *o += *v;
                    }
                }
                out
            }
        };
        values.push(out);
    }
    Forward { n, values }
}

/// Back-propagates `output_grad` (`[n × output_dim]`, one row per sample).
pub(crate) fn backward_pass<T: Scalar>(
    graph: &Graph,
    params: &[T],
    fwd: &Forward<T>,
    output_grad: Vec<T>,
) -> Backward<T> {
    let n = fwd.n;
    let count = graph.nodes.len();
    let mut node_grads: Vec<Vec<T>> = vec![Vec::new(); count];
    let mut pre_grads: Vec<Vec<T>> = vec![Vec::new(); count];
    node_grads[graph.output] = output_grad;

    for idx in (0..count).rev() {
        if node_grads[idx].is_empty() {
            continue;
        }
        match &graph.nodes[idx] {
            Node::Input => {}
            Node::Dense(d) => {
                let y = &fwd.values[idx];
                let gy = &node_grads[idx];
                let dz: Vec<T> = gy
                    .iter()
                    .zip(y)
                    .map(|(g, y)| *g * d.activation.derivative_from_output(*y))
                    .collect();
                if !matches!(graph.nodes[d.src], Node::Input) {
                    let w = &params[d.weight_offset..d.weight_offset + d.in_dim * d.out_dim];
                    let mut gx = vec![T::zero(); n * d.in_dim];
                    for s in 0..n {
                        let dzs = &dz[s * d.out_dim..(s + 1) * d.out_dim];
                        let gxs = &mut gx[s * d.in_dim..(s + 1) * d.in_dim];
                        for (o, dzo) in dzs.iter().enumerate() {
                            let row = &w[o * d.in_dim..(o + 1) * d.in_dim];
                            for (g, wi) in gxs.iter_mut().zip(row) {
                                *g += *dzo * *wi;
                            }
                        }
                    }
                    accumulate(&mut node_grads[d.src], gx);
                }
                pre_grads[idx] = dz;
            }
            Node::Sum(srcs) => {
                let g = node_grads[idx].clone();
                for &s in srcs {
                    if !matches!(graph.nodes[s], Node::Input) {
                        accumulate(&mut node_grads[s], g.clone());
                    }
                }
            }
        }
    }
    Backward { node_grads, pre_grads }
}

fn accumulate<T: Scalar>(slot: &mut Vec<T>, g: Vec<T>) {
    if slot.is_empty() {
        *slot = g;
    } else {
        for (a, b) in slot.iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Parameter gradient summed over all samples in the batch.
pub(crate) fn summed_param_grad<T: Scalar>(graph: &Graph, fwd: &Forward<T>, bwd: &Backward<T>) -> Vec<T> {
    let n = fwd.n;
    let mut grad = vec![T::zero(); graph.param_count];
    for (idx, d) in graph.dense_nodes() {
        let dz = &bwd.pre_grads[idx];
        if dz.is_empty() {
            continue;
        }
        let x = &fwd.values[d.src];
        for s in 0..n {
            let xs = &x[s * d.in_dim..(s + 1) * d.in_dim];
            for o in 0..d.out_dim {
                let g = dz[s * d.out_dim + o];
                let row = &mut grad[d.weight_offset + o * d.in_dim..d.weight_offset + (o + 1) * d.in_dim];
                for (r, xi) in row.iter_mut().zip(xs) {
                    *r += g * *xi;
                }
                if let Some(b) = d.bias_offset {
                    grad[b + o] += g;
                }
            }
        }
    }
    grad
}

/// Parameter gradient of each sample separately, `[n × m]` row-major.
pub(crate) fn per_sample_param_grad(graph: &Graph, fwd: &Forward<f64>, bwd: &Backward<f64>) -> Vec<f64> {
    let n = fwd.n;
    let m = graph.param_count;
    let mut grad = vec![0.0; n * m];
    for (idx, d) in graph.dense_nodes() {
        let dz = &bwd.pre_grads[idx];
        if dz.is_empty() {
            continue;
        }
        let x = &fwd.values[d.src];
        for s in 0..n {
            let xs = &x[s * d.in_dim..(s + 1) * d.in_dim];
            let row = &mut grad[s * m..(s + 1) * m];
            for o in 0..d.out_dim {
                let g = dz[s * d.out_dim + o];
                let w = &mut row[d.weight_offset + o * d.in_dim..d.weight_offset + (o + 1) * d.in_dim];
                for (r, xi) in w.iter_mut().zip(xs) {
                    *r = g * *xi;
                }
                if let Some(b) = d.bias_offset {
                    row[b + o] = g;
                }
            }
        }
    }
    grad
}
