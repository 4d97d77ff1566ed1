//! Zero-cost metrics computed from one mini-batch at a random
//! initialization: GradSign and the usual pruning-at-init / kernel
//! baselines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{materialize, CellArch, SearchSpaceSpec};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::{
    backward_pass, forward_pass, hessian_vector_product, init_params, losses_and_output_grads, mean_loss_gradient,
    per_sample_gradients, Activation, Batch, GradMatrix, LossKind, Model, Node, ParamVector,
};

/// Ridge added to a singular NASWOT kernel before taking its log-determinant.
pub const NASWOT_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[serde(rename = "gradsign")]
    GradSign,
    GradNorm,
    Snip,
    Grasp,
    Synflow,
    Fisher,
    Naswot,
}

impl MetricKind {
    pub const ALL: [MetricKind; 7] = [
        MetricKind::GradSign,
        MetricKind::GradNorm,
        MetricKind::Snip,
        MetricKind::Grasp,
        MetricKind::Synflow,
        MetricKind::Fisher,
        MetricKind::Naswot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::GradSign => "gradsign",
            MetricKind::GradNorm => "grad_norm",
            MetricKind::Snip => "snip",
            MetricKind::Grasp => "grasp",
            MetricKind::Synflow => "synflow",
            MetricKind::Fisher => "fisher",
            MetricKind::Naswot => "naswot",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: MetricKind,
    pub value: f64,
    pub arch_id: Option<u32>,
    /// Initialization seed, when the score was produced from one.
    pub seed: Option<u64>,
    pub batch_size: usize,
    /// Set when NASWOT had to regularize a singular kernel.
    pub regularized: bool,
}

/// Signs of a [`GradMatrix`], entries in `{-1, 0, +1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
}

impl SignMatrix {
    pub fn from_signs(rows: usize, cols: usize, data: Vec<i8>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch { what: "sign matrix".into(), expected: rows * cols, got: data.len() });
        }
        if data.iter().any(|s| !(-1..=1).contains(s)) {
            return Err(Error::InvalidArgument("sign entries must be -1, 0 or +1".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, k: usize) -> i8 {
        self.data[i * self.cols + k]
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    /// `Σ_k |Σ_i s[i,k]|`.
    pub fn gradsign(&self) -> f64 {
        let mut col = vec![0i64; self.cols];
        for row in self.data.chunks(self.cols.max(1)) {
            for (c, &s) in col.iter_mut().zip(row) {
                *c += s as i64;
            }
        }
        col.iter().map(|c| c.unsigned_abs()).sum::<u64>() as f64
    }
}

/// `+1` above `zero_tol`, `-1` below `-zero_tol`, `0` inside the band.
pub fn sign_matrix(grads: &GradMatrix, zero_tol: f64) -> Result<SignMatrix> {
    if !(zero_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("zero_tol must be >= 0, got {zero_tol}")));
    }
    let mut data = Vec::with_capacity(grads.data().len());
    for &g in grads.data() {
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient matrix".into()));
        }
        data.push(if g > zero_tol {
            1
        } else if g < -zero_tol {
            -1
        } else {
            0
        });
    }
    Ok(SignMatrix { rows: grads.rows(), cols: grads.cols(), data })
}

/// GradSign: agreement of per-sample gradient signs at `θ0`, summed over
/// parameters. Larger means denser sample-wise optima.
pub fn gradsign_score<M: Model + ?Sized>(
    model: &M,
    theta0: &ParamVector,
    batch: &Batch,
    kind: LossKind,
    zero_tol: f64,
) -> Result<MetricScore> {
    if batch.len() < 2 {
        return Err(Error::InvalidArgument(format!("gradsign needs at least 2 samples, got {}", batch.len())));
    }
    let grads = per_sample_gradients(model, theta0, batch, kind)?;
    let value = sign_matrix(&grads, zero_tol)?.gradsign();
    Ok(MetricScore {
        metric: MetricKind::GradSign,
        value,
        arch_id: model.arch_id(),
        seed: None,
        batch_size: batch.len(),
        regularized: false,
    })
}

/// One of the baseline metrics; `kind` must not be [`MetricKind::GradSign`].
pub fn baseline_score<M: Model + ?Sized>(
    kind: MetricKind,
    model: &M,
    theta0: &ParamVector,
    batch: &Batch,
    loss: LossKind,
) -> Result<MetricScore> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("baseline metrics need a non-empty batch".into()));
    }
    let theta = theta0.values();
    let mut regularized = false;
    let value = match kind {
        MetricKind::GradSign => {
            return Err(Error::InvalidArgument("gradsign is not a baseline; use gradsign_score".into()))
        }
        MetricKind::GradNorm => {
            let (_, g) = mean_loss_gradient(model, theta, batch, loss)?;
            g.iter().map(|v| v * v).sum::<f64>().sqrt()
        }
        MetricKind::Snip => {
            let (_, g) = mean_loss_gradient(model, theta, batch, loss)?;
            theta.iter().zip(&g).map(|(t, g)| (t * g).abs()).sum()
        }
        MetricKind::Grasp => {
            let (_, g) = mean_loss_gradient(model, theta, batch, loss)?;
            let hg = hessian_vector_product(model, theta, batch, loss, &g)?;
            theta.iter().zip(&hg).map(|(t, h)| -h * t).sum()
        }
        MetricKind::Synflow => synflow(model, theta),
        MetricKind::Fisher => fisher(model, theta, batch, loss)?,
        MetricKind::Naswot => {
            let (v, reg) = naswot(model, theta, batch)?;
            regularized = reg;
            v
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{kind} score")));
    }
    Ok(MetricScore { metric: kind, value, arch_id: model.arch_id(), seed: None, batch_size: batch.len(), regularized })
}

/// `Σ |θ|·∂R/∂|θ|` where `R` sums the outputs of the network run with
/// absolute-valued parameters on a single all-ones input.
fn synflow<M: Model + ?Sized>(model: &M, theta: &[f64]) -> f64 {
    let graph = model.graph();
    let abs: Vec<f64> = theta.iter().map(|t| t.abs()).collect();
    let ones = vec![1.0; graph.input_dim()];
    let fwd = forward_pass(graph, &abs, &ones, 1);
    let bwd = backward_pass(graph, &abs, &fwd, vec![1.0; graph.output_dim()]);
    let grad = crate::tensor::summed_param_grad(graph, &fwd, &bwd);
    abs.iter().zip(&grad).map(|(a, g)| a * g).sum()
}

/// `Σ_channels Σ_samples (a · ∂L/∂a)²` over every hidden dense output.
fn fisher<M: Model + ?Sized>(model: &M, theta: &[f64], batch: &Batch, loss: LossKind) -> Result<f64> {
    let graph = model.graph();
    crate::tensor::check_params(graph, theta)?;
    crate::tensor::check_inputs(graph, batch.inputs())?;
    let n = batch.len();
    batch.labels().validate(loss, n, graph.output_dim())?;
    let fwd = forward_pass(graph, theta, batch.inputs().data(), n);
    let (_, mut out_grad) = losses_and_output_grads(fwd.output(graph), graph.output_dim(), batch.labels(), loss);
    out_grad.iter_mut().for_each(|g| *g /= n as f64);
    let bwd = backward_pass(graph, theta, &fwd, out_grad);
    let mut total = 0.0;
    for (idx, _) in graph.dense_nodes() {
        if idx == graph.output_node() || bwd.node_grads[idx].is_empty() {
            continue;
        }
        for (a, g) in fwd.values[idx].iter().zip(&bwd.node_grads[idx]) {
            total += (a * g) * (a * g);
        }
    }
    Ok(total)
}

/// Log-determinant of the relu activation-pattern kernel
/// `K[i,j] = N_A − hamming(c_i, c_j)`. Returns the value and whether the
/// kernel had to be regularized.
fn naswot<M: Model + ?Sized>(model: &M, theta: &[f64], batch: &Batch) -> Result<(f64, bool)> {
    let graph = model.graph();
    crate::tensor::check_params(graph, theta)?;
    crate::tensor::check_inputs(graph, batch.inputs())?;
    let relu_nodes: Vec<usize> = graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n, Node::Dense(d) if d.activation == Activation::Relu))
        .map(|(i, _)| i)
        .collect();
    if relu_nodes.is_empty() {
        return Err(Error::UnsupportedMetric { metric: "naswot".into(), reason: "architecture has no relu units".into() });
    }
    let n = batch.len();
    let fwd = forward_pass(graph, theta, batch.inputs().data(), n);
    let codes: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            relu_nodes
                .iter()
                .flat_map(|&idx| {
                    let dim = graph.dim(idx);
                    fwd.values[idx][s * dim..(s + 1) * dim].iter().map(|&v| v > 0.0).collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let units = codes[0].len() as f64;
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dist = codes[i].iter().zip(&codes[j]).filter(|(a, b)| a != b).count() as f64;
            kernel[i * n + j] = units - dist;
        }
    }
    if let Some(ld) = cholesky_logdet(&kernel, n, 1e-9 * units) {
        return Ok((ld, false));
    }
    for i in 0..n {
        kernel[i * n + i] += NASWOT_RIDGE;
    }
    cholesky_logdet(&kernel, n, 0.0)
        .map(|ld| (ld, true))
        .ok_or_else(|| Error::NonFinite("regularized naswot kernel".into()))
}

/// `log det` of a symmetric positive definite matrix; `None` when a pivot
/// falls to `min_pivot` or below.
fn cholesky_logdet(a: &[f64], n: usize, min_pivot: f64) -> Option<f64> {
    let mut l = vec![0.0; n * n];
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > min_pivot) {
            return None;
        }
        let root = d.sqrt();
        l[j * n + j] = root;
        logdet += 2.0 * root.ln();
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / root;
        }
    }
    Some(logdet)
}

/// Which metric to compute and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSpec {
    pub metric: MetricKind,
    pub loss: LossKind,
    pub zero_tol: f64,
    /// Number of initializations averaged per architecture.
    pub inits: usize,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { metric: MetricKind::GradSign, loss: LossKind::CrossEntropy, zero_tol: 0.0, inits: 1 }
    }
}

impl MetricSpec {
    pub fn new(metric: MetricKind) -> Self {
        Self { metric, ..Self::default() }
    }

    pub fn compute<M: Model + ?Sized>(&self, model: &M, theta0: &ParamVector, batch: &Batch) -> Result<MetricScore> {
        match self.metric {
            MetricKind::GradSign => gradsign_score(model, theta0, batch, self.loss, self.zero_tol),
            other => baseline_score(other, model, theta0, batch, self.loss),
        }
    }
}

/// Scores architectures of a space on one shared batch with a shared
/// initialization policy.
#[derive(Clone, Debug)]
pub struct Scorer {
    pub spec: MetricSpec,
    pub space: SearchSpaceSpec,
    pub num_classes: usize,
    pub batch: Batch,
    pub seed: u64,
}

impl Scorer {
    fn init_seed(&self, j: usize) -> u64 {
        if j == 0 {
            self.seed
        } else {
            derive_seed(self.seed, &format!("init{j}"))
        }
    }

    pub fn score(&self, arch: &CellArch) -> Result<MetricScore> {
        let exec = materialize(arch, &self.space, self.batch.inputs().cols(), self.num_classes);
        let inits = self.spec.inits.max(1);
        let mut total = 0.0;
        let mut regularized = false;
        for j in 0..inits {
            let theta0 = init_params(&exec, self.init_seed(j));
            let s = self.spec.compute(&exec, &theta0, &self.batch)?;
            total += s.value;
            regularized |= s.regularized;
        }
        Ok(MetricScore {
            metric: self.spec.metric,
            value: total / inits as f64,
            arch_id: Some(arch.id()),
            seed: Some(self.seed),
            batch_size: self.batch.len(),
            regularized,
        })
    }

    /// Simulated cost of one [`Scorer::score`] call for `arch`.
    pub fn cost(&self, arch: &CellArch) -> f64 {
        let exec = materialize(arch, &self.space, self.batch.inputs().cols(), self.num_classes);
        crate::trainer::simulated_cost(exec.param_count(), self.batch.len() * self.spec.inits.max(1))
    }

    /// Order-preserving scores; a failing architecture yields an `Err` in
    /// its slot without affecting the others.
    pub fn score_pool(&self, archs: &[CellArch], parallel: bool) -> Vec<Result<MetricScore>> {
        if parallel {
            archs.par_iter().map(|a| self.score(a)).collect()
        } else {
            archs.iter().map(|a| self.score(a)).collect()
        }
    }
}
