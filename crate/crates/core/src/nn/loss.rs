use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Discriminator cross-entropy and the non-saturating generator loss.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<GanLosses> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Empty("GAN losses need non-empty batches".into()));
    }
    let real = mean(d_real.iter().map(|p| -clamp_p(*p).ln()), d_real.len());
    let fake = mean(
        d_fake.iter().map(|p| -(1.0 - clamp_p(*p)).ln()),
        d_fake.len(),
    );
    let g_loss = mean(d_fake.iter().map(|p| -clamp_p(*p).ln()), d_fake.len());
    Ok(GanLosses {
        d_loss: real + fake,
        g_loss,
    })
}

/// `∂ d_loss / ∂ p` for the real half of the batch.
pub fn bce_real_grad(d_real: &[f64]) -> Vec<f64> {
    let n = d_real.len() as f64;
    d_real.iter().map(|p| -1.0 / (clamp_p(*p) * n)).collect()
}

/// `∂ d_loss / ∂ p` for the fake half of the batch.
pub fn bce_fake_grad(d_fake: &[f64]) -> Vec<f64> {
    let n = d_fake.len() as f64;
    d_fake
        .iter()
        .map(|p| 1.0 / ((1.0 - clamp_p(*p)) * n))
        .collect()
}

/// `∂ g_loss / ∂ p`.
pub fn generator_loss_grad(d_fake: &[f64]) -> Vec<f64> {
    let n = d_fake.len() as f64;
    d_fake.iter().map(|p| -1.0 / (clamp_p(*p) * n)).collect()
}

/// Mean softmax cross-entropy over a batch of logits and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows but {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|l| **l as usize >= logits.ncols()) {
        return Err(Error::Range(format!(
            "label {l} for {} classes",
            logits.ncols()
        )));
    }
    let n = labels.len() as f64;
    let mut grad = logits.to_owned();
    let mut loss = 0.0;
    for (mut row, &label) in grad.axis_iter_mut(Axis(0)).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
        loss -= row[label as usize].max(f64::MIN_POSITIVE).ln();
        row[label as usize] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    Ok((loss / n, grad))
}
