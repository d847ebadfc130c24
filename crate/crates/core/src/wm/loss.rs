use ndarray::Array2;

use crate::error::{check_len, Error, Result};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the log.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_shapes(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<usize> {
    check_len("target frames", pred.len(), target.len())?;
    let k = pred.first().map_or(0, Vec::len);
    for (p, y) in pred.iter().zip(target) {
        check_len("prediction width", k, p.len())?;
        check_len("target width", k, y.len())?;
    }
    Ok(k)
}

fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean binary cross-entropy over all frames and joints.
pub fn bce_loss(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    let k = check_shapes(pred, target)?;
    let n = pred.len() * k;
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).flat_map(|(p, y)| p.iter().zip(y)).map(|(&p, &y)| bce_term(p, y)).sum();
    Ok(sum / n as f64)
}

/// `(1/K) Σ_joints Σ_t (w_t - w_{t-1})²`.
pub fn smoothness_loss(pred: &[Vec<f64>]) -> Result<f64> {
    let k = pred.first().map_or(0, Vec::len);
    if k == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for w in pred.windows(2) {
        check_len("prediction width", k, w[1].len())?;
        sum += w[1].iter().zip(&w[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / k as f64)
}

pub fn total_loss(pred: &[Vec<f64>], target: &[Vec<f64>], lambda: f64) -> Result<f64> {
    Ok(bce_loss(pred, target)? + lambda * smoothness_loss(pred)?)
}

/// Batch-mean loss over samples laid out as rows `t * batch + b`, per-sample
/// losses, and the gradient with respect to the pre-sigmoid logits.
pub fn logit_gradient(
    outputs: &Array2<f64>,
    targets: &Array2<f64>,
    steps: usize,
    batch: usize,
    lambda: f64,
) -> Result<(f64, Vec<f64>, Array2<f64>)> {
    if outputs.dim() != targets.dim() {
        return Err(Error::dims("target rows", outputs.nrows(), targets.nrows()));
    }
    check_len("output rows", steps * batch, outputs.nrows())?;
    let k = outputs.ncols();
    let mut grad = Array2::zeros(outputs.dim());
    let mut per_sample = vec![0.0; batch];
    let bce_scale = 1.0 / (steps * k) as f64;
    let smooth_scale = lambda / k as f64;
    let inv_b = 1.0 / batch as f64;
    for b in 0..batch {
        let mut loss = 0.0;
        for t in 0..steps {
            let r = t * batch + b;
            for j in 0..k {
                let p = outputs[[r, j]];
                let y = targets[[r, j]];
                loss += bce_scale * bce_term(p, y);
                let mut dp_smooth = 0.0;
                if t > 0 {
                    let d = p - outputs[[r - batch, j]];
                    loss += smooth_scale * d * d;
                    dp_smooth += 2.0 * d;
                }
                if t + 1 < steps {
                    dp_smooth -= 2.0 * (outputs[[r + batch, j]] - p);
                }
                let d_bce = if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) { p - y } else { 0.0 };
                grad[[r, j]] = inv_b * (bce_scale * d_bce + smooth_scale * dp_smooth * p * (1.0 - p));
            }
        }
        per_sample[b] = loss;
    }
    let mean = per_sample.iter().sum::<f64>() * inv_b;
    Ok((mean, per_sample, grad))
}
