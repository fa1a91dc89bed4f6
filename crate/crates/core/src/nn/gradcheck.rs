use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{backward, forward_with_weights, Activation, DenseNet, ForwardRecord};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Parameters skipped because a LeakyRelu pre-activation crossed zero between the
    /// two finite-difference evaluations.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

fn eval(net: &DenseNet, x: &Array2<f64>) -> Result<ForwardRecord> {
    forward_with_weights(net, &net.weights(), x)
}

fn crosses_kink(net: &DenseNet, a: &ForwardRecord, b: &ForwardRecord) -> bool {
    net.layers.iter().enumerate().any(|(k, l)| {
        matches!(l.activation, Activation::LeakyRelu(_))
            && a.preacts[k]
                .iter()
                .zip(b.preacts[k].iter())
                .any(|(p, q)| (*p > 0.0) != (*q > 0.0))
    })
}

/// Compares backprop gradients against central differences on `n_params` parameters drawn
/// at random (seeded). `loss_fn` maps a network output to `(loss, ∂loss/∂output)`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`. The network's parameters are left as
/// they were; its gradient buffers are overwritten with the gradient at the current point.
pub fn grad_check<F>(
    net: &mut DenseNet,
    x: &Array2<f64>,
    loss_fn: F,
    n_params: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    net.zero_grad();
    let rec = eval(net, x)?;
    let (loss, upstream) = loss_fn(rec.output());
    if !loss.is_finite() {
        return Err(Error::NonFinite(
            "loss at the check point is not finite".into(),
        ));
    }
    backward(net, &rec, &upstream)?;

    let mut order: Vec<usize> = (0..net.param_count()).collect();
    order.shuffle(&mut rng::stream(seed, 0));

    let h = GRAD_CHECK_STEP;
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
    };
    for idx in order {
        if report.checked == n_params {
            break;
        }
        let p = net.param(idx);
        net.set_param(idx, p + h);
        let plus = eval(net, x)?;
        net.set_param(idx, p - h);
        let minus = eval(net, x)?;
        net.set_param(idx, p);
        if crosses_kink(net, &plus, &minus) {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (loss_fn(plus.output()).0 - loss_fn(minus.output()).0) / (2.0 * h);
        let analytic = net.grad(idx);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
