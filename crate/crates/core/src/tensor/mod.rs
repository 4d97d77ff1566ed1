//! Dense-network engine: deterministic forward evaluation, per-sample losses
//! and exact per-sample reverse-mode gradients.

mod graph;
mod scalar;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use graph::{Activation, DenseNode, Graph, GraphBuilder, Model, Node, NodeId};
pub use scalar::{Dual, Scalar};

pub(crate) use graph::{backward_pass, forward_pass, per_sample_param_grad, summed_param_grad};

use crate::error::{Error, Result};

/// Dense row-major array of finite `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("tensor shape {shape:?} has a zero extent")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::DimensionMismatch { what: "tensor data".into(), expected: len, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Self { shape, data })
    }

    /// Convenience constructor for a `[rows × cols]` matrix.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    /// Rows `indices` stacked into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self { shape, data }
    }
}

/// Flattened network parameters θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes(Vec<usize>),
    Targets(Tensor),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Targets(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, indices: &[usize]) -> Self {
        match self {
            Labels::Classes(c) => Labels::Classes(indices.iter().map(|&i| c[i]).collect()),
            Labels::Targets(t) => Labels::Targets(t.select_rows(indices)),
        }
    }

    /// Checks the labels against `n` predictions of width `o` for `kind`.
    /// Class labels are accepted for mse and treated as one-hot targets.
    pub(crate) fn validate(&self, kind: LossKind, n: usize, o: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch { what: "labels".into(), expected: n, got: self.len() });
        }
        match (self, kind) {
            (Labels::Classes(c), _) => {
                if let Some(&bad) = c.iter().find(|&&y| y >= o) {
                    return Err(Error::LabelOutOfRange { label: bad, classes: o });
                }
                Ok(())
            }
            (Labels::Targets(t), LossKind::Mse) => {
                if t.cols() != o {
                    return Err(Error::DimensionMismatch { what: "mse targets".into(), expected: o, got: t.cols() });
                }
                Ok(())
            }
            (Labels::Targets(_), LossKind::CrossEntropy) => Err(Error::InvalidArgument(
                "cross_entropy needs integer class labels".into(),
            )),
        }
    }
}

/// Mini-batch `{(x_i, y_i)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    inputs: Tensor,
    labels: Labels,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Labels) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::InvalidArgument(format!("batch inputs must be [n, d], got {:?}", inputs.shape())));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::DimensionMismatch { what: "labels".into(), expected: inputs.rows(), got: labels.len() });
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { inputs: self.inputs.select_rows(indices), labels: self.labels.select(indices) }
    }

    pub fn sample(&self, i: usize) -> Self {
        self.select(&[i])
    }
}

/// Per-sample gradients, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch { what: "gradient matrix".into(), expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation, bias: bool) -> Self {
        Self { width, activation, bias }
    }
}

/// A chain of dense layers `ℝ^d → ℝ^o`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    graph: Graph,
}

impl NetworkSpec {
    /// The last layer must carry a bias: a per-sample optimum then forces
    /// the loss derivative w.r.t. the output to vanish.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("input_dim must be positive".into()));
        }
        let Some(last) = layers.last() else {
            return Err(Error::InvalidNetwork("network needs at least one layer".into()));
        };
        if !last.bias {
            return Err(Error::InvalidNetwork("last dense layer must have a bias".into()));
        }
        if let Some(i) = layers.iter().position(|l| l.width == 0) {
            return Err(Error::InvalidNetwork(format!("layer {i} has zero width")));
        }
        let mut b = GraphBuilder::new(input_dim);
        let mut cur = b.input();
        for (i, l) in layers.iter().enumerate() {
            cur = b.dense(format!("layer{i}"), cur, l.width, l.activation, l.bias);
        }
        let graph = b.finish(cur);
        Ok(Self { input_dim, layers, graph })
    }

    /// Hidden layers with biases followed by a biased identity output layer.
    pub fn mlp(input_dim: usize, hidden: &[(usize, Activation)], output_dim: usize) -> Result<Self> {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&(w, a)| LayerSpec::new(w, a, true)).collect();
        layers.push(LayerSpec::new(output_dim, Activation::Identity, true));
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.width).unwrap_or(0)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }
}

impl Model for NetworkSpec {
    fn graph(&self) -> &Graph {
        &self.graph
    }
}

/// Maps the next 53 random bits to `[0, 1)`.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform fan-in initialization: every dense weight and bias is drawn
/// i.i.d. from `U[-1/√fan_in, 1/√fan_in]` with a ChaCha8 stream seeded by
/// `seed`, in node order (weights row-major, then bias).
pub fn init_params<M: Model + ?Sized>(model: &M, seed: u64) -> ParamVector {
    let graph = model.graph();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; graph.param_count()];
    for (_, d) in graph.dense_nodes() {
        let bound = 1.0 / (d.in_dim as f64).sqrt();
        let mut draw = |slot: &mut f64| *slot = -bound + 2.0 * bound * unit_f64(&mut rng);
        values[d.weight_offset..d.weight_offset + d.in_dim * d.out_dim].iter_mut().for_each(&mut draw);
        if let Some(b) = d.bias_offset {
            values[b..b + d.out_dim].iter_mut().for_each(&mut draw);
        }
    }
    ParamVector(values)
}

pub(crate) fn check_params(graph: &Graph, theta: &[f64]) -> Result<()> {
    if theta.len() != graph.param_count() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector".into(),
            expected: graph.param_count(),
            got: theta.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_inputs(graph: &Graph, inputs: &Tensor) -> Result<()> {
    if inputs.cols() != graph.input_dim() {
        let consumer = graph
            .nodes()
            .iter()
            .position(|n| matches!(n, Node::Dense(d) if d.src == 0))
            .map(|i| graph.label(i).to_owned())
            .unwrap_or_else(|| "input".to_owned());
        return Err(Error::DimensionMismatch { what: consumer, expected: graph.input_dim(), got: inputs.cols() });
    }
    Ok(())
}

pub fn forward<M: Model + ?Sized>(model: &M, theta: &ParamVector, batch: &Batch) -> Result<Tensor> {
    let graph = model.graph();
    check_params(graph, theta.values())?;
    check_inputs(graph, batch.inputs())?;
    let n = batch.len();
    let fwd = forward_pass(graph, theta.values(), batch.inputs().data(), n);
    Tensor::matrix(n, graph.output_dim(), fwd.output(graph).to_vec())
}

/// Per-sample losses and their derivatives w.r.t. the predictions.
/// Labels must already be validated.
pub(crate) fn losses_and_output_grads<T: Scalar>(
    pred: &[T],
    o: usize,
    labels: &Labels,
    kind: LossKind,
) -> (Vec<T>, Vec<T>) {
    let n = pred.len() / o;
    let mut losses = Vec::with_capacity(n);
    let mut grads = vec![T::zero(); n * o];
    let inv_o = T::from_f64(1.0 / o as f64);
    for i in 0..n {
        let p = &pred[i * o..(i + 1) * o];
        let g = &mut grads[i * o..(i + 1) * o];
        match kind {
            LossKind::Mse => {
                let mut l = T::zero();
                for k in 0..o {
                    let target = match labels {
                        Labels::Targets(t) => T::from_f64(t.get(i, k)),
                        Labels::Classes(c) => T::from_f64(if c[i] == k { 1.0 } else { 0.0 }),
                    };
                    let r = p[k] - target;
                    l += r * r;
                    g[k] = T::from_f64(2.0) * r * inv_o;
                }
                losses.push(l * inv_o);
            }
            LossKind::CrossEntropy => {
                let Labels::Classes(c) = labels else { unreachable!("validated") };
                let max = p.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
                let shift = T::from_f64(max);
                let exps: Vec<T> = p.iter().map(|&v| (v - shift).exp()).collect();
                let mut z = T::zero();
                for &e in &exps {
                    z += e;
                }
                for k in 0..o {
                    g[k] = exps[k] / z;
                }
                g[c[i]] = g[c[i]] - T::from_f64(1.0);
                losses.push(z.ln() + shift - p[c[i]]);
            }
        }
    }
    (losses, grads)
}

pub fn per_sample_losses(pred: &Tensor, labels: &Labels, kind: LossKind) -> Result<Vec<f64>> {
    labels.validate(kind, pred.rows(), pred.cols())?;
    Ok(losses_and_output_grads(pred.data(), pred.cols(), labels, kind).0)
}

/// Row `i` is the exact gradient of sample `i`'s loss w.r.t. θ.
pub fn per_sample_gradients<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &Batch,
    kind: LossKind,
) -> Result<GradMatrix> {
    let graph = model.graph();
    check_params(graph, theta.values())?;
    check_inputs(graph, batch.inputs())?;
    let n = batch.len();
    batch.labels().validate(kind, n, graph.output_dim())?;
    let fwd = forward_pass(graph, theta.values(), batch.inputs().data(), n);
    let (_, out_grad) = losses_and_output_grads(fwd.output(graph), graph.output_dim(), batch.labels(), kind);
    let bwd = backward_pass(graph, theta.values(), &fwd, out_grad);
    let data = per_sample_param_grad(graph, &fwd, &bwd);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("per-sample gradient".into()));
    }
    GradMatrix::new(n, graph.param_count(), data)
}

/// Mean loss `(1/n) Σ l_i` and its gradient.
pub fn mean_loss_gradient<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    batch: &Batch,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    let graph = model.graph();
    check_params(graph, theta)?;
    check_inputs(graph, batch.inputs())?;
    let n = batch.len();
    batch.labels().validate(kind, n, graph.output_dim())?;
    let fwd = forward_pass(graph, theta, batch.inputs().data(), n);
    let (losses, mut out_grad) = losses_and_output_grads(fwd.output(graph), graph.output_dim(), batch.labels(), kind);
    let inv_n = 1.0 / n as f64;
    out_grad.iter_mut().for_each(|g| *g *= inv_n);
    let bwd = backward_pass(graph, theta, &fwd, out_grad);
    let grad = summed_param_grad(graph, &fwd, &bwd);
    Ok((losses.iter().sum::<f64>() * inv_n, grad))
}

/// Mean loss over the batch without gradients.
pub fn mean_loss<M: Model + ?Sized>(model: &M, theta: &[f64], batch: &Batch, kind: LossKind) -> Result<f64> {
    let graph = model.graph();
    check_params(graph, theta)?;
    check_inputs(graph, batch.inputs())?;
    let n = batch.len();
    batch.labels().validate(kind, n, graph.output_dim())?;
    let fwd = forward_pass(graph, theta, batch.inputs().data(), n);
    let (losses, _) = losses_and_output_grads(fwd.output(graph), graph.output_dim(), batch.labels(), kind);
    Ok(losses.iter().sum::<f64>() / n as f64)
}

/// Exact Hessian-vector product `H v` of the mean batch loss, obtained by
/// pushing the tangent `v` forward through the reverse pass.
pub fn hessian_vector_product<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    batch: &Batch,
    kind: LossKind,
    v: &[f64],
) -> Result<Vec<f64>> {
    let graph = model.graph();
    check_params(graph, theta)?;
    check_params(graph, v)?;
    check_inputs(graph, batch.inputs())?;
    let n = batch.len();
    batch.labels().validate(kind, n, graph.output_dim())?;
    let params: Vec<Dual> = theta.iter().zip(v).map(|(&t, &d)| Dual::new(t, d)).collect();
    let inputs: Vec<Dual> = batch.inputs().data().iter().map(|&x| Dual::from_f64(x)).collect();
    let fwd = forward_pass(graph, &params, &inputs, n);
    let (_, mut out_grad) = losses_and_output_grads(fwd.output(graph), graph.output_dim(), batch.labels(), kind);
    let inv_n = Dual::from_f64(1.0 / n as f64);
    out_grad.iter_mut().for_each(|g| *g = *g * inv_n);
    let bwd = backward_pass(graph, &params, &fwd, out_grad);
    Ok(summed_param_grad(graph, &fwd, &bwd).into_iter().map(|g| g.d).collect())
}

/// Central-difference gradient of sample `index`'s loss; a verification
/// oracle for [`per_sample_gradients`].
pub fn finite_diff_gradient<M: Model + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &Batch,
    index: usize,
    kind: LossKind,
    eps: f64,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if index >= batch.len() {
        return Err(Error::InvalidArgument(format!("sample {index} out of range for batch of {}", batch.len())));
    }
    let sample = batch.sample(index);
    let mut probe = theta.values().to_vec();
    let mut grad = Vec::with_capacity(probe.len());
    for k in 0..probe.len() {
        let orig = probe[k];
        probe[k] = orig + eps;
        let up = mean_loss(model, &probe, &sample, kind)?;
        probe[k] = orig - eps;
        let down = mean_loss(model, &probe, &sample, kind)?;
        probe[k] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param_model() -> Graph {
        // ŷ = w·x, a single weight and no bias.
        let mut b = GraphBuilder::new(1);
        let x = b.input();
        let out = b.dense("w", x, 1, Activation::Identity, false);
        b.finish(out)
    }

    fn scalar_batch(x: f64, y: f64) -> Batch {
        Batch::new(
            Tensor::matrix(1, 1, vec![x]).unwrap(),
            Labels::Targets(Tensor::matrix(1, 1, vec![y]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let net = NetworkSpec::mlp(4, &[(8, Activation::Relu)], 3).unwrap();
        let a = init_params(&net, 7);
        let b = init_params(&net, 7);
        assert_eq!(a, b);
        assert_ne!(a, init_params(&net, 8));
        // first layer has fan_in 4
        let first = 4 * 8 + 8;
        assert!(a.values()[..first].iter().all(|v| (-0.5..=0.5).contains(v)));
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.values()[first..].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn last_layer_without_bias_is_rejected() {
        let err = NetworkSpec::new(2, vec![LayerSpec::new(2, Activation::Identity, false)]);
        assert!(matches!(err, Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn identity_network_maps_input_through() {
        let net = NetworkSpec::new(2, vec![LayerSpec::new(2, Activation::Identity, true)]).unwrap();
        let theta = ParamVector::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let batch = Batch::new(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap(), Labels::Classes(vec![0])).unwrap();
        let out = forward(&net, &theta, &batch).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_hidden_layer_clips_negative_preactivations() {
        let net = NetworkSpec::mlp(1, &[(3, Activation::Relu)], 1).unwrap();
        // hidden weights all -1, biases -1; output weights 1, bias 0.5
        let theta = ParamVector::new(vec![-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 0.5]).unwrap();
        let batch = Batch::new(Tensor::matrix(2, 1, vec![0.5, 2.0]).unwrap(), Labels::Classes(vec![0, 0])).unwrap();
        let g = net.graph();
        let fwd = forward_pass(g, theta.values(), batch.inputs().data(), 2);
        assert!(fwd.values[1].iter().all(|&v| v == 0.0));
        assert_eq!(forward(&net, &theta, &batch).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        let net = NetworkSpec::mlp(3, &[(4, Activation::Tanh)], 2).unwrap();
        let theta = init_params(&net, 11);
        let x = [0.3, -1.2, 0.7];
        let batch = Batch::new(Tensor::matrix(1, 3, x.to_vec()).unwrap(), Labels::Classes(vec![1])).unwrap();
        let out = forward(&net, &theta, &batch).unwrap();
        let t = theta.values();
        let mut h = [0.0; 4];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut z = t[12 + j];
            for i in 0..3 {
                z += t[j * 3 + i] * x[i];
            }
            *hj = z.tanh();
        }
        for k in 0..2 {
            let mut z = t[16 + 8 + k];
            for j in 0..4 {
                z += t[16 + k * 4 + j] * h[j];
            }
            assert!((out.get(0, k) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_reports_offending_layer() {
        let net = NetworkSpec::mlp(3, &[(4, Activation::Tanh)], 2).unwrap();
        let theta = init_params(&net, 1);
        let batch = Batch::new(Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap(), Labels::Classes(vec![0])).unwrap();
        match forward(&net, &theta, &batch) {
            Err(Error::DimensionMismatch { what, expected: 3, got: 2 }) => assert_eq!(what, "layer0"),
            other => panic!("unexpected {other:?}"),
        }
        let short = ParamVector::new(vec![0.0; 3]).unwrap();
        assert!(matches!(forward(&net, &short, &batch), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn loss_examples() {
        let pred = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let ce = per_sample_losses(&pred, &Labels::Classes(vec![0]), LossKind::CrossEntropy).unwrap();
        assert!((ce[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let pred = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let y = Labels::Targets(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        assert_eq!(per_sample_losses(&pred, &y, LossKind::Mse).unwrap(), vec![0.5]);

        let exact = Labels::Targets(pred.clone());
        assert_eq!(per_sample_losses(&pred, &exact, LossKind::Mse).unwrap(), vec![0.0]);

        let bad = per_sample_losses(&pred, &Labels::Classes(vec![2]), LossKind::CrossEntropy);
        assert!(matches!(bad, Err(Error::LabelOutOfRange { label: 2, classes: 2 })));
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let pred = Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap();
        let l = per_sample_losses(&pred, &Labels::Classes(vec![1]), LossKind::CrossEntropy).unwrap();
        assert!((l[0] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn one_parameter_gradient_is_analytic() {
        let g = one_param_model();
        let theta = ParamVector::new(vec![3.0]).unwrap();
        let grads = per_sample_gradients(&g, &theta, &scalar_batch(1.0, 1.0), LossKind::Mse).unwrap();
        assert_eq!(grads.row(0), &[4.0]);
    }

    #[test]
    fn exact_fit_gives_zero_gradient_row() {
        let net = NetworkSpec::mlp(2, &[(3, Activation::Tanh)], 1).unwrap();
        let theta = init_params(&net, 5);
        let x = Tensor::matrix(2, 2, vec![0.1, 0.2, -0.4, 0.9]).unwrap();
        let pred = forward(&net, &theta, &Batch::new(x.clone(), Labels::Classes(vec![0, 0])).unwrap()).unwrap();
        let mut targets = pred.data().to_vec();
        targets[1] += 0.3;
        let batch = Batch::new(x, Labels::Targets(Tensor::matrix(2, 1, targets).unwrap())).unwrap();
        let g = per_sample_gradients(&net, &theta, &batch, LossKind::Mse).unwrap();
        assert!(g.row(0).iter().all(|&v| v == 0.0));
        assert!(g.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn finite_difference_examples() {
        let g = one_param_model();
        let theta = ParamVector::new(vec![3.0]).unwrap();
        // l(w) = w² with x = 1, y = 0
        let fd = finite_diff_gradient(&g, &theta, &scalar_batch(1.0, 0.0), 0, LossKind::Mse, 1e-5).unwrap();
        assert!((fd[0] - 6.0).abs() < 1e-6);

        // zero input, dead relu units and an output bias equal to the target: flat loss
        let net = NetworkSpec::mlp(1, &[(2, Activation::Relu)], 1).unwrap();
        let mut theta = init_params(&net, 3);
        theta.values_mut()[2] = -1.0;
        theta.values_mut()[3] = -1.0;
        theta.values_mut()[6] = 0.0;
        let batch = scalar_batch(0.0, 0.0);
        let fd = finite_diff_gradient(&net, &theta, &batch, 0, LossKind::Mse, 1e-5).unwrap();
        assert!(fd.iter().all(|v| v.abs() < 1e-12));

        assert!(finite_diff_gradient(&g, &theta_one(), &scalar_batch(1.0, 0.0), 0, LossKind::Mse, 0.0).is_err());
    }

    fn theta_one() -> ParamVector {
        ParamVector::new(vec![1.0]).unwrap()
    }

    #[test]
    fn hvp_matches_gradient_difference() {
        let net = NetworkSpec::mlp(3, &[(5, Activation::Tanh), (4, Activation::Relu)], 3).unwrap();
        let theta = init_params(&net, 9);
        let x = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let batch = Batch::new(x, Labels::Classes(vec![0, 1, 2, 1])).unwrap();
        let v: Vec<f64> = (0..theta.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let hv = hessian_vector_product(&net, theta.values(), &batch, LossKind::CrossEntropy, &v).unwrap();
        let h = 1e-5;
        let plus: Vec<f64> = theta.values().iter().zip(&v).map(|(t, d)| t + h * d).collect();
        let minus: Vec<f64> = theta.values().iter().zip(&v).map(|(t, d)| t - h * d).collect();
        let (_, gp) = mean_loss_gradient(&net, &plus, &batch, LossKind::CrossEntropy).unwrap();
        let (_, gm) = mean_loss_gradient(&net, &minus, &batch, LossKind::CrossEntropy).unwrap();
        for k in 0..hv.len() {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            assert!((hv[k] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "k={k}: {} vs {fd}", hv[k]);
        }
    }
}
