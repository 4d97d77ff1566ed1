//! Per-sample gradients and exact Hessian-vector products of a small MLP,
//! checked against central differences.

use gradsign::tensor::*;

fn main() -> gradsign::Result<()> {
    let net = NetworkSpec::mlp(3, &[(5, Activation::Tanh), (4, Activation::Relu)], 2)?;
    let theta = init_params(&net, 7);
    let x = Tensor::matrix(4, 3, vec![0.3, -1.2, 0.8, 1.0, 0.1, -0.4, -0.7, 0.9, 0.2, 0.5, 0.5, -1.1])?;
    let batch = Batch::new(x, Labels::Classes(vec![0, 1, 1, 0]))?;

    let grads = per_sample_gradients(&net, &theta, &batch, LossKind::CrossEntropy)?;
    println!("{} parameters, per-sample gradient matrix {}x{}", theta.len(), grads.rows(), grads.cols());
    for i in 0..batch.len() {
        let fd = finite_diff_gradient(&net, &theta, &batch, i, LossKind::CrossEntropy, 1e-5)?;
        let err = (0..grads.cols()).map(|k| (grads.get(i, k) - fd[k]).abs()).fold(0.0, f64::max);
        println!("sample {i}: max |analytic - finite difference| = {err:.2e}");
    }

    let v: Vec<f64> = (0..theta.len()).map(|k| if k % 3 == 0 { 1.0 } else { -0.5 }).collect();
    let hv = hessian_vector_product(&net, theta.values(), &batch, LossKind::CrossEntropy, &v)?;
    let eps = 1e-5;
    let shifted = |s: f64| -> gradsign::Result<Vec<f64>> {
        let t: Vec<f64> = theta.values().iter().zip(&v).map(|(t, d)| t + s * d).collect();
        Ok(mean_loss_gradient(&net, &t, &batch, LossKind::CrossEntropy)?.1)
    };
    let (plus, minus) = (shifted(eps)?, shifted(-eps)?);
    let err = hv.iter().zip(plus.iter().zip(&minus)).map(|(h, (p, m))| (h - (p - m) / (2.0 * eps)).abs()).fold(0.0, f64::max);
    println!("Hessian-vector product: max deviation from gradient differences = {err:.2e}");
    Ok(())
}
