//! Brute-force checks of the sample-wise landscape theory on tiny models:
//! per-sample optima, the optima density Ψ, the smoothness constant H, the
//! training and population bounds, and the sign-agreement identities that
//! connect Ψ to the GradSign score.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::{
    forward, init_params, mean_loss, mean_loss_gradient, per_sample_gradients, unit_f64, Activation, Batch, Labels,
    LossKind, Model, NetworkSpec, ParamVector, Tensor,
};

/// Holdout samples drawn per sweep instance.
pub const HOLDOUT_SAMPLES: usize = 32;

/// Step size used by [`estimate_smoothness`] second differences.
pub const SMOOTHNESS_EPS: f64 = 1e-4;

/// Gradient-descent settings for locating optima.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Stop once the gradient's ∞-norm falls below this.
    pub tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self { lr: 0.05, max_steps: 200_000, tol: 1e-7 }
    }
}

impl DescentConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Outcome of one gradient-descent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentRun {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub steps: usize,
    pub converged: bool,
    /// Loss grew past ten times its starting value or stopped being finite.
    pub diverged: bool,
}

fn descend<M: Model + ?Sized>(model: &M, theta0: &[f64], batch: &Batch, kind: LossKind, cfg: &DescentConfig) -> Result<DescentRun> {
    let mut theta = theta0.to_vec();
    let (start, mut grad) = mean_loss_gradient(model, &theta, batch, kind)?;
    let mut loss = start;
    for step in 0..=cfg.max_steps {
        if grad.iter().all(|g| g.abs() < cfg.tol) {
            return Ok(DescentRun { theta, loss, steps: step, converged: true, diverged: false });
        }
        if step == cfg.max_steps {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.lr * g;
        }
        let next = mean_loss_gradient(model, &theta, batch, kind);
        match next {
            Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) && !(l > 10.0 * start && l > 0.0) => {
                loss = l;
                grad = g;
            }
            _ => {
                return Ok(DescentRun { theta, loss: f64::INFINITY, steps: step + 1, converged: false, diverged: true })
            }
        }
    }
    Ok(DescentRun { theta, loss, steps: cfg.max_steps, converged: false, diverged: false })
}

/// Per-sample optima `θ_i*` and the joint optimum `θ*`, all reached by
/// plain gradient descent from the same `θ0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOptima {
    pub per_sample: Vec<DescentRun>,
    pub joint: DescentRun,
}

impl SampleOptima {
    pub fn n(&self) -> usize {
        self.per_sample.len()
    }

    pub fn converged_flags(&self) -> Vec<bool> {
        self.per_sample.iter().map(|r| r.converged).collect()
    }

    /// Mean training loss `J` at `θ*`.
    pub fn joint_loss(&self) -> f64 {
        self.joint.loss
    }
}

pub fn find_sample_optima<M: Model + ?Sized>(
    model: &M,
    theta0: &ParamVector,
    samples: &Batch,
    kind: LossKind,
    cfg: &DescentConfig,
) -> Result<SampleOptima> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let per_sample = (0..samples.len())
        .map(|i| descend(model, theta0.values(), &samples.sample(i), kind, cfg))
        .collect::<Result<Vec<_>>>()?;
    let joint = descend(model, theta0.values(), samples, kind, cfg)?;
    Ok(SampleOptima { per_sample, joint })
}

/// Largest central second difference of any per-sample loss along any
/// coordinate, over `θ0` itself and `probes − 1` further points drawn
/// uniformly from the ∞-ball of `radius` around it. This is an empirical
/// lower bound on the true smoothness constant `H`. Probe points come
/// from one stream, so raising `probes` never lowers the estimate.
pub fn estimate_smoothness<M: Model + ?Sized>(
    model: &M,
    theta0: &ParamVector,
    samples: &Batch,
    kind: LossKind,
    radius: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidArgument("probes must be >= 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be > 0, got {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = theta0.len();
    let eps = SMOOTHNESS_EPS;
    let mut best = f64::NEG_INFINITY;
    for probe in 0..probes {
        let mut center = theta0.values().to_vec();
        if probe > 0 {
            for c in center.iter_mut() {
                *c += radius * (2.0 * unit_f64(&mut rng) - 1.0);
            }
        }
        let at = |theta: &[f64]| -> Result<Vec<f64>> {
            let pred = forward(model, &ParamVector::new(theta.to_vec())?, samples)?;
            crate::tensor::per_sample_losses(&pred, samples.labels(), kind)
        };
        let mid = at(&center)?;
        for k in 0..m {
            let mut shifted = center.clone();
            shifted[k] = center[k] + eps;
            let up = at(&shifted)?;
            shifted[k] = center[k] - eps;
            let down = at(&shifted)?;
            for i in 0..samples.len() {
                best = best.max((up[i] - 2.0 * mid[i] + down[i]) / (eps * eps));
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub psi: f64,
    pub h: f64,
    /// Number of converged samples that entered Ψ.
    pub n: usize,
    pub excluded: usize,
    /// `‖θ_i* − θ_j*‖₁` for `i < j` over the converged samples.
    pub pairwise_l1: Vec<f64>,
    pub j_loss: f64,
}

/// `Ψ = (√H / n²) Σ_{i,j} ‖θ_i* − θ_j*‖₁` over ordered pairs (including
/// `i = j`) of converged samples.
pub fn compute_psi(optima: &SampleOptima, h: f64) -> Result<PsiReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("H must be > 0, got {h}")));
    }
    let kept: Vec<&[f64]> = optima.per_sample.iter().filter(|r| r.converged).map(|r| r.theta.as_slice()).collect();
    let n = kept.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no converged per-sample optimum".into()));
    }
    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairwise.push(kept[i].iter().zip(kept[j]).map(|(a, b)| (a - b).abs()).sum::<f64>());
        }
    }
    let ordered_sum = 2.0 * pairwise.iter().sum::<f64>();
    Ok(PsiReport {
        psi: h.sqrt() / (n * n) as f64 * ordered_sum,
        h,
        n,
        excluded: optima.n() - n,
        pairwise_l1: pairwise,
        j_loss: optima.joint_loss(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub j_loss: f64,
    pub bound_n3: f64,
    pub bound_n3_half: f64,
    pub holds_n3: bool,
    pub holds_half: bool,
    pub holdout_mean: f64,
    pub sigma: f64,
    pub delta: f64,
    pub pop_bound: f64,
    pub pop_holds: bool,
}

/// Training bounds `J ≤ n³Ψ²` and `J ≤ n³Ψ²/2`, and the population bound
/// `mean(holdout) ≤ n³Ψ² + σ/√(nδ)`.
pub fn check_bounds(report: &PsiReport, holdout_losses: &[f64], sigma: f64, delta: f64) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if holdout_losses.is_empty() {
        return Err(Error::InvalidArgument("need at least one holdout loss".into()));
    }
    let n = report.n as f64;
    let bound_n3 = n.powi(3) * report.psi * report.psi;
    let bound_n3_half = bound_n3 / 2.0;
    let holdout_mean = holdout_losses.iter().sum::<f64>() / holdout_losses.len() as f64;
    let pop_bound = bound_n3 + sigma / (n * delta).sqrt();
    Ok(BoundReport {
        j_loss: report.j_loss,
        bound_n3,
        bound_n3_half,
        holds_n3: report.j_loss <= bound_n3,
        holds_half: report.j_loss <= bound_n3_half,
        holdout_mean,
        sigma,
        delta,
        pop_bound,
        pop_holds: holdout_mean <= pop_bound,
    })
}

/// Standard deviation of `‖θ* − θ_u*‖₁²` over holdout samples `u`, where
/// `θ_u*` is the per-sample optimum of `u` from `θ0`. Unconverged holdout
/// samples are skipped; `None` when fewer than two remain.
pub fn estimate_sigma<M: Model + ?Sized>(
    model: &M,
    theta0: &ParamVector,
    theta_star: &[f64],
    holdout: &Batch,
    kind: LossKind,
    cfg: &DescentConfig,
) -> Result<Option<f64>> {
    cfg.validate()?;
    let mut sq = Vec::with_capacity(holdout.len());
    for u in 0..holdout.len() {
        let run = descend(model, theta0.values(), &holdout.sample(u), kind, cfg)?;
        if run.converged {
            let d: f64 = run.theta.iter().zip(theta_star).map(|(a, b)| (a - b).abs()).sum();
            sq.push(d * d);
        }
    }
    if sq.len() < 2 {
        return Ok(None);
    }
    let mean = sq.iter().sum::<f64>() / sq.len() as f64;
    let var = sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (sq.len() - 1) as f64;
    Ok(Some(var.sqrt()))
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Per-coordinate frequency with which `θ_i* − θ0` and `θ_j* − θ0` share a
/// sign when `θ0` is drawn uniformly from `[−a, a]^m`.
pub fn sign_agreement_mc<R: Rng>(theta_i: &[f64], theta_j: &[f64], a: f64, trials: usize, rng: &mut R) -> Result<Vec<f64>> {
    if theta_i.len() != theta_j.len() {
        return Err(Error::DimensionMismatch { what: "optimum pair".into(), expected: theta_i.len(), got: theta_j.len() });
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("hypercube half-width must be > 0, got {a}")));
    }
    if theta_i.iter().chain(theta_j).any(|t| !(t.abs() <= a)) {
        return Err(Error::OutsideHypercube { bound: a });
    }
    let mut agree = vec![0u64; theta_i.len()];
    for _ in 0..trials {
        for (k, count) in agree.iter_mut().enumerate() {
            let t0 = a * (2.0 * unit_f64(rng) - 1.0);
            if sign(theta_i[k] - t0) == sign(theta_j[k] - t0) {
                *count += 1;
            }
        }
    }
    Ok(agree.iter().map(|&c| c as f64 / trials as f64).collect())
}

/// Both sides of `(1/n²) Σ_{i,j} 1[s_i = s_j] = ½ + (n − 2p)²/(2n²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub equal: bool,
}

pub fn agreement_identity_check(column: &[i8]) -> Result<AgreementIdentity> {
    if column.is_empty() {
        return Err(Error::InvalidArgument("empty sign column".into()));
    }
    if column.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidArgument("identity is defined for ±1 entries only".into()));
    }
    let n = column.len();
    let mut same = 0u64;
    for &a in column {
        for &b in column {
            same += (a == b) as u64;
        }
    }
    let nf = n as f64;
    let lhs = same as f64 / (nf * nf);
    let p = column.iter().filter(|&&s| s == 1).count() as f64;
    let rhs = 0.5 + (nf - 2.0 * p).powi(2) / (2.0 * nf * nf);
    Ok(AgreementIdentity { lhs, rhs, equal: (lhs - rhs).abs() <= 1e-12 })
}

/// Model families used for the theory sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFamily {
    Linear,
    OneHiddenTanh,
}

/// A small mse regression problem: network, initialization, training
/// samples and holdout samples from the same generator.
#[derive(Clone, Debug)]
pub struct TheoryInstance {
    pub id: usize,
    pub family: InstanceFamily,
    pub net: NetworkSpec,
    pub theta0: ParamVector,
    pub samples: Batch,
    pub holdout: Batch,
    /// Targets come from the network at `θ0`, so every sample shares that
    /// exact optimum.
    pub planted: bool,
}

fn uniform_inputs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<Tensor> {
    Tensor::matrix(n, d, (0..n * d).map(|_| 2.0 * unit_f64(rng) - 1.0).collect())
}

fn targets_from(net: &NetworkSpec, theta: &ParamVector, inputs: Tensor) -> Result<Batch> {
    let n = inputs.rows();
    let probe = Batch::new(inputs.clone(), Labels::Targets(Tensor::matrix(n, net.output_dim(), vec![0.0; n * net.output_dim()])?))?;
    let pred = forward(net, theta, &probe)?;
    Batch::new(inputs, Labels::Targets(pred))
}

/// Random instance with `n ≤ 8` samples and `m ≤ 12` parameters.
/// Targets come from an independently initialized teacher of the same
/// shape, or from `θ0` itself when `planted`.
pub fn random_instance(root: u64, id: usize, planted: bool, holdout: usize) -> Result<TheoryInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(root, &format!("theory.instance{id}")));
    let family = if rng.gen_bool(0.5) { InstanceFamily::Linear } else { InstanceFamily::OneHiddenTanh };
    let n = rng.gen_range(2..=8);
    let (d, net) = match family {
        InstanceFamily::Linear => {
            let d = rng.gen_range(1..=4);
            let o = rng.gen_range(1..=2);
            (d, NetworkSpec::mlp(d, &[], o)?)
        }
        InstanceFamily::OneHiddenTanh => {
            let (d, h) = [(1, 2), (1, 3), (2, 2)][rng.gen_range(0..3)];
            (d, NetworkSpec::mlp(d, &[(h, Activation::Tanh)], 1)?)
        }
    };
    let theta0 = init_params(&net, rng.gen());
    let teacher = if planted { theta0.clone() } else { init_params(&net, rng.gen()) };
    let samples = targets_from(&net, &teacher, uniform_inputs(&mut rng, n, d)?)?;
    let holdout = targets_from(&net, &teacher, uniform_inputs(&mut rng, holdout.max(2), d)?)?;
    Ok(TheoryInstance { id, family, net, theta0, samples, holdout, planted })
}

/// Settings for [`run_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub descent: DescentConfig,
    pub smoothness_probes: usize,
    pub delta: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { descent: DescentConfig::default(), smoothness_probes: 8, delta: 0.1 }
    }
}

/// One row of the theory sweep report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub instance_id: usize,
    pub n: usize,
    pub m: usize,
    pub psi: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub bound_n3: f64,
    pub bound_n3_half: f64,
    pub holds_n3: bool,
    pub holds_half: bool,
    pub pop_bound: f64,
    pub pop_holds: bool,
    /// Every per-sample run reached the gradient tolerance.
    pub converged: bool,
}

/// Optima, H, Ψ, σ and both bounds for one instance. H is probed over the
/// ∞-ball that contains every per-sample optimum.
pub fn run_instance(inst: &TheoryInstance, cfg: &VerifyConfig) -> Result<VerifyRow> {
    let kind = LossKind::Mse;
    let optima = find_sample_optima(&inst.net, &inst.theta0, &inst.samples, kind, &cfg.descent)?;
    let radius = optima
        .per_sample
        .iter()
        .flat_map(|r| r.theta.iter().zip(inst.theta0.values()).map(|(a, b)| (a - b).abs()))
        .fold(1e-3, f64::max);
    let h_seed = derive_seed(inst.id as u64, "theory.smoothness");
    let h = estimate_smoothness(&inst.net, &inst.theta0, &inst.samples, kind, radius, cfg.smoothness_probes, h_seed)?;
    let psi = compute_psi(&optima, h)?;
    let sigma =
        estimate_sigma(&inst.net, &inst.theta0, &optima.joint.theta, &inst.holdout, kind, &cfg.descent)?.unwrap_or(0.0);
    let holdout_losses = {
        let pred = forward(&inst.net, &ParamVector::new(optima.joint.theta.clone())?, &inst.holdout)?;
        crate::tensor::per_sample_losses(&pred, inst.holdout.labels(), kind)?
    };
    let bounds = check_bounds(&psi, &holdout_losses, sigma, cfg.delta)?;
    let converged = psi.excluded == 0;
    Ok(VerifyRow {
        instance_id: inst.id,
        n: psi.n,
        m: inst.theta0.len(),
        psi: psi.psi,
        h,
        j: bounds.j_loss,
        bound_n3: bounds.bound_n3,
        bound_n3_half: bounds.bound_n3_half,
        holds_n3: bounds.holds_n3,
        holds_half: bounds.holds_half,
        pop_bound: bounds.pop_bound,
        pop_holds: bounds.pop_holds,
        converged,
    })
}

/// Runs instances `0..count` of the random family (or the planted family)
/// in parallel; rows come back in instance order.
pub fn run_sweep(root: u64, count: usize, planted: bool, cfg: &VerifyConfig) -> Result<Vec<VerifyRow>> {
    (0..count)
        .into_par_iter()
        .map(|id| run_instance(&random_instance(root, id, planted, HOLDOUT_SAMPLES)?, cfg))
        .collect()
}

pub fn write_verify_csv<W: std::io::Write>(out: W, rows: &[VerifyRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sum over coordinates and ordered sample pairs of sign agreements of
/// per-sample gradients at `θ0`; the sample estimate that GradSign
/// summarizes. Larger means denser optima.
pub fn sign_agreement_count<M: Model + ?Sized>(model: &M, theta0: &ParamVector, samples: &Batch, kind: LossKind) -> Result<u64> {
    let g = per_sample_gradients(model, theta0, samples, kind)?;
    let mut total = 0u64;
    for k in 0..g.cols() {
        for i in 0..g.rows() {
            for j in 0..g.rows() {
                total += (sign(g.get(i, k)) == sign(g.get(j, k))) as u64;
            }
        }
    }
    Ok(total)
}

/// Mean loss `J` at `theta` on `samples`.
pub fn training_loss<M: Model + ?Sized>(model: &M, theta: &[f64], samples: &Batch, kind: LossKind) -> Result<f64> {
    mean_loss(model, theta, samples, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::GraphBuilder;

    fn scalar_model() -> crate::tensor::Graph {
        let mut b = GraphBuilder::new(1);
        let out = b.dense("w", b.input(), 1, Activation::Identity, false);
        b.finish(out)
    }

    fn batch(xs: &[f64], ys: &[f64]) -> Batch {
        Batch::new(
            Tensor::matrix(xs.len(), 1, xs.to_vec()).unwrap(),
            Labels::Targets(Tensor::matrix(ys.len(), 1, ys.to_vec()).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_optimum() {
        let g = scalar_model();
        let cfg = DescentConfig { lr: 0.1, max_steps: 10_000, tol: 1e-10 };
        let theta0 = ParamVector::new(vec![0.0]).unwrap();
        let opt = find_sample_optima(&g, &theta0, &batch(&[1.0], &[1.0]), LossKind::Mse, &cfg).unwrap();
        let run = &opt.per_sample[0];
        assert!(run.converged && (run.theta[0] - 1.0).abs() < 1e-9);
        assert!(run.loss < 1e-18);
    }

    #[test]
    fn optimum_start_takes_no_steps() {
        let g = scalar_model();
        let theta0 = ParamVector::new(vec![2.0]).unwrap();
        let opt = find_sample_optima(&g, &theta0, &batch(&[1.0], &[2.0]), LossKind::Mse, &DescentConfig::default()).unwrap();
        assert_eq!(opt.per_sample[0].steps, 0);
        assert_eq!(opt.per_sample[0].theta, vec![2.0]);
        assert_eq!(opt.joint.steps, 0);
    }

    #[test]
    fn divergence_is_flagged() {
        let g = scalar_model();
        let theta0 = ParamVector::new(vec![0.5]).unwrap();
        let cfg = DescentConfig { lr: 5.0, max_steps: 100, tol: 1e-9 };
        let opt = find_sample_optima(&g, &theta0, &batch(&[1.0], &[0.0]), LossKind::Mse, &cfg).unwrap();
        assert!(opt.per_sample[0].diverged && !opt.per_sample[0].converged);
    }

    #[test]
    fn smoothness_of_quadratic() {
        // l(w) = (w·1 − 0)² has second derivative 2 everywhere
        let g = scalar_model();
        let theta0 = ParamVector::new(vec![0.3]).unwrap();
        let h = estimate_smoothness(&g, &theta0, &batch(&[1.0], &[0.0]), LossKind::Mse, 1.0, 5, 3).unwrap();
        assert!((h - 2.0).abs() < 1e-3);
        assert!(estimate_smoothness(&g, &theta0, &batch(&[1.0], &[0.0]), LossKind::Mse, 0.0, 5, 3).is_err());
    }

    fn optima_at(points: &[f64]) -> SampleOptima {
        let run = |t: f64| DescentRun { theta: vec![t], loss: 0.0, steps: 1, converged: true, diverged: false };
        SampleOptima { per_sample: points.iter().map(|&t| run(t)).collect(), joint: run(0.5) }
    }

    #[test]
    fn psi_examples() {
        let r = compute_psi(&optima_at(&[0.0, 1.0]), 4.0).unwrap();
        assert_eq!(r.psi, 1.0);
        assert_eq!(compute_psi(&optima_at(&[0.7, 0.7, 0.7]), 3.0).unwrap().psi, 0.0);
        let doubled = compute_psi(&optima_at(&[0.0, 1.0]), 8.0).unwrap();
        assert!((doubled.psi - 2f64.sqrt()).abs() < 1e-15);
        assert!(compute_psi(&optima_at(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn unconverged_samples_are_excluded() {
        let mut opt = optima_at(&[0.0, 1.0, 5.0]);
        opt.per_sample[2].converged = false;
        let r = compute_psi(&opt, 4.0).unwrap();
        assert_eq!((r.n, r.excluded), (2, 1));
        assert_eq!(r.psi, 1.0);
    }

    #[test]
    fn bound_formulas() {
        let report = PsiReport { psi: 0.5, h: 1.0, n: 2, excluded: 0, pairwise_l1: vec![0.5], j_loss: 1.0 };
        let b = check_bounds(&report, &[0.0, 4.0], 1.0, 0.5).unwrap();
        assert_eq!((b.bound_n3, b.bound_n3_half), (2.0, 1.0));
        assert!(b.holds_n3 && b.holds_half);
        assert_eq!(b.pop_bound, 3.0);
        assert!(b.pop_holds);
        let limit = check_bounds(&report, &[0.0], 0.0, 0.999_999).unwrap();
        assert_eq!(limit.pop_bound, limit.bound_n3);
        assert!(check_bounds(&report, &[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn identity_examples() {
        let r = agreement_identity_check(&[1, 1, 1, -1]).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.625, 0.625));
        assert_eq!(agreement_identity_check(&[1, 1, 1]).unwrap().lhs, 1.0);
        assert_eq!(agreement_identity_check(&[1, -1, -1, 1]).unwrap().rhs, 0.5);
        assert!(agreement_identity_check(&[1, 0]).is_err());
    }

    #[test]
    fn sign_agreement_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sign_agreement_mc(&[0.2, -0.4], &[0.2, -0.4], 1.0, 100, &mut rng).unwrap(), vec![1.0, 1.0]);
        assert_eq!(sign_agreement_mc(&[1.0], &[-1.0], 1.0, 1000, &mut rng).unwrap(), vec![0.0]);
        assert!(matches!(sign_agreement_mc(&[2.0], &[0.0], 1.0, 10, &mut rng), Err(Error::OutsideHypercube { .. })));
    }

    #[test]
    fn planted_instance_is_tight() {
        let inst = random_instance(5, 0, true, 8).unwrap();
        let row = run_instance(&inst, &VerifyConfig::default()).unwrap();
        assert_eq!((row.psi, row.j), (0.0, 0.0));
        assert!(row.holds_n3 && row.holds_half);
    }
}
