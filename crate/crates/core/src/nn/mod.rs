//! Sequential dense networks with exact reverse-mode gradients.
//!
//! A forward pass returns a [`ForwardRecord`] holding every layer input and
//! pre-activation. [`backward`] differentiates the clean network: it propagates through the
//! network's own weights even when the record came from a noisy pass (hardware execution or
//! perturbed weights), which gives straight-through gradients for noise-aware training.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod loss;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::par;
use crate::pmmc::{tiled_matvec_keyed, LayerMapping, NoiseRegime, TensorCore};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_HEADER,
};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_STEP};
pub use layer::{Activation, DenseLayer};
pub use loss::{
    bce_fake_grad, bce_real_grad, gan_losses, generator_loss_grad, softmax_cross_entropy,
    GanLosses, PROB_CLAMP,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetRole {
    Generator,
    Discriminator,
    FeatureClassifier,
}

impl NetRole {
    pub fn tag(&self) -> &'static str {
        match self {
            NetRole::Generator => "generator",
            NetRole::Discriminator => "discriminator",
            NetRole::FeatureClassifier => "classifier",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "generator" => Some(NetRole::Generator),
            "discriminator" => Some(NetRole::Discriminator),
            "classifier" => Some(NetRole::FeatureClassifier),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
    pub role: NetRole,
    /// Bumped on every parameter update; records from older generations are stale.
    generation: u64,
}

impl DenseNet {
    pub fn new(role: NetRole, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} features but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            role,
            generation: 0,
        })
    }

    /// Glorot-uniform multilayer perceptron with widths `sizes` and one activation per layer.
    pub fn mlp<R: rand::Rng + ?Sized>(
        role: NetRole,
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} sizes need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, act)| DenseLayer::glorot(w[0], w[1], *act, rng))
            .collect();
        Self::new(role, layers)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn bump_generation(&mut self) {
        self.generation += 1;
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.zero_grad();
        }
    }

    pub fn weights(&self) -> Vec<Array2<f64>> {
        self.layers.iter().map(|l| l.weights.clone()).collect()
    }

    /// Parameter by flat index (layer-major, weights row-major then bias).
    pub fn param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights.as_slice().expect("standard layout")[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights.as_slice_mut().expect("standard layout")[idx] = value;
                return;
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                l.bias[idx] = value;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    /// Accumulated gradient by flat index, same ordering as [`DenseNet::param`].
    pub fn grad(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.grad_w.len() {
                return l.grad_w.as_slice().expect("standard layout")[idx];
            }
            idx -= l.grad_w.len();
            if idx < l.grad_b.len() {
                return l.grad_b[idx];
            }
            idx -= l.grad_b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

/// Execution mode of a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum Exec<'a> {
    /// Full-precision `w·x + b`.
    Exact,
    /// Every matrix product goes through the tensor core; bias and activation stay exact.
    Hardware(&'a HardwareExec),
}

/// Hardware deployment settings: a core template and the contrast range used for every
/// layer's mapping (`|W|max` is taken from the layer's current weights).
#[derive(Clone, Debug)]
pub struct HardwareExec {
    pub core: TensorCore,
    pub gamma_max: f64,
}

impl HardwareExec {
    pub fn new(core: TensorCore, gamma_max: f64) -> Self {
        Self { core, gamma_max }
    }
}

/// Everything backward needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    generation: u64,
    /// `activations[0]` is the input; `activations[l + 1]` is the output of layer `l`.
    pub activations: Vec<Array2<f64>>,
    pub preacts: Vec<Array2<f64>>,
}

impl ForwardRecord {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("record has an input")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.activations.pop().expect("record has an input")
    }
}

fn check_input(net: &DenseNet, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != net.in_dim() {
        return Err(Error::Shape(format!(
            "{} network expects {} inputs, got {}",
            net.role.tag(),
            net.in_dim(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Forward pass over a batch (one sample per row).
pub fn forward(net: &DenseNet, x: &Array2<f64>, exec: &Exec<'_>) -> Result<ForwardRecord> {
    check_input(net, x)?;
    match exec {
        Exec::Exact => forward_with_weights(net, &net.weights(), x),
        Exec::Hardware(hw) => forward_hardware(net, x, hw),
    }
}

/// Exact forward pass that substitutes `weights` for the network's own weight matrices.
/// Biases and activations are the network's.
pub fn forward_with_weights(
    net: &DenseNet,
    weights: &[Array2<f64>],
    x: &Array2<f64>,
) -> Result<ForwardRecord> {
    check_input(net, x)?;
    if weights.len() != net.layers.len()
        || weights
            .iter()
            .zip(&net.layers)
            .any(|(w, l)| w.dim() != l.weights.dim())
    {
        return Err(Error::Shape(
            "substitute weights do not match the network".into(),
        ));
    }
    let mut activations = Vec::with_capacity(net.layers.len() + 1);
    let mut preacts = Vec::with_capacity(net.layers.len());
    activations.push(x.to_owned());
    for (layer, w) in net.layers.iter().zip(weights) {
        let input = activations.last().expect("non-empty");
        let mut z = input.dot(&w.t());
        z += &layer.bias;
        let a = z.mapv(|v| layer.activation.apply(v));
        preacts.push(z);
        activations.push(a);
    }
    Ok(ForwardRecord {
        generation: net.generation,
        activations,
        preacts,
    })
}

fn forward_hardware(net: &DenseNet, x: &Array2<f64>, hw: &HardwareExec) -> Result<ForwardRecord> {
    let mappings = net
        .layers
        .iter()
        .map(|l| LayerMapping::from_weights(&l.weights, hw.gamma_max))
        .collect::<Result<Vec<_>>>()?;
    let mut template = hw.core.clone();
    template.clear_deployment();
    if template.noise.regime == NoiseRegime::FixedPerDeployment {
        // Program every tile once; all samples then share the deployment.
        template.reseed(0);
        for (k, (l, m)) in net.layers.iter().zip(&mappings).enumerate() {
            let zeros = vec![0.0; l.in_dim()];
            tiled_matvec_keyed(&mut template, k as u64, &l.weights, &zeros, m)?;
        }
    }

    let n = x.nrows();
    let per_sample = par::try_map_indexed(n, |i| -> Result<Vec<(Array1<f64>, Array1<f64>)>> {
        let mut core = template.fork(i as u64 + 1);
        let mut input = x.row(i).to_owned();
        let mut out = Vec::with_capacity(net.layers.len());
        for (k, (l, m)) in net.layers.iter().zip(&mappings).enumerate() {
            let y = tiled_matvec_keyed(
                &mut core,
                k as u64,
                &l.weights,
                input.as_slice().expect("contiguous"),
                m,
            )?;
            let z = Array1::from(y) + &l.bias;
            let a = z.mapv(|v| l.activation.apply(v));
            input = a.clone();
            out.push((z, a));
        }
        Ok(out)
    })?;

    let mut activations = vec![x.to_owned()];
    let mut preacts = Vec::with_capacity(net.layers.len());
    for (k, l) in net.layers.iter().enumerate() {
        let mut z = Array2::zeros((n, l.out_dim()));
        let mut a = Array2::zeros((n, l.out_dim()));
        for (i, sample) in per_sample.iter().enumerate() {
            z.row_mut(i).assign(&sample[k].0);
            a.row_mut(i).assign(&sample[k].1);
        }
        preacts.push(z);
        activations.push(a);
    }
    Ok(ForwardRecord {
        generation: net.generation,
        activations,
        preacts,
    })
}

fn check_record(net: &DenseNet, rec: &ForwardRecord, upstream: &Array2<f64>) -> Result<()> {
    if rec.generation != net.generation {
        return Err(Error::StaleRecord(format!(
            "record from generation {} used with network generation {}",
            rec.generation, net.generation
        )));
    }
    if rec.preacts.len() != net.layers.len() || rec.activations.len() != net.layers.len() + 1 {
        return Err(Error::StaleRecord(
            "record does not match the network depth".into(),
        ));
    }
    if upstream.dim() != rec.output().dim() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output {:?}",
            upstream.dim(),
            rec.output().dim()
        )));
    }
    Ok(())
}

fn backprop(
    net: &DenseNet,
    rec: &ForwardRecord,
    upstream: &Array2<f64>,
    mut on_layer: impl FnMut(usize, &Array2<f64>, &Array2<f64>),
) -> Result<Array2<f64>> {
    check_record(net, rec, upstream)?;
    let mut grad = upstream.to_owned();
    for (k, layer) in net.layers.iter().enumerate().rev() {
        let act = layer.activation;
        let mut dz = grad;
        ndarray::Zip::from(&mut dz)
            .and(&rec.preacts[k])
            .and(&rec.activations[k + 1])
            .for_each(|g, &z, &a| *g *= act.derivative(z, a));
        on_layer(k, &dz, &rec.activations[k]);
        grad = dz.dot(&layer.weights);
    }
    Ok(grad)
}

/// Accumulates parameter gradients of the clean network and returns the input gradient.
pub fn backward(
    net: &mut DenseNet,
    rec: &ForwardRecord,
    upstream: &Array2<f64>,
) -> Result<Array2<f64>> {
    let mut grads = vec![None; net.layers.len()];
    let dx = backprop(net, rec, upstream, |k, dz, input| {
        grads[k] = Some((dz.t().dot(input), dz.sum_axis(Axis(0))));
    })?;
    for (layer, g) in net.layers.iter_mut().zip(grads) {
        let (gw, gb) = g.expect("every layer visited");
        layer.grad_w += &gw;
        layer.grad_b += &gb;
    }
    Ok(dx)
}

/// Input gradient only; parameter buffers are untouched.
pub fn input_gradient(
    net: &DenseNet,
    rec: &ForwardRecord,
    upstream: &Array2<f64>,
) -> Result<Array2<f64>> {
    backprop(net, rec, upstream, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmmc::NoiseSpec;
    use crate::rng;
    use ndarray::array;

    fn small_net(seed: u64) -> DenseNet {
        let mut r = rng::stream(seed, 0);
        DenseNet::mlp(
            NetRole::Generator,
            &[3, 5, 4, 2],
            &[
                Activation::LeakyRelu(0.2),
                Activation::Tanh,
                Activation::Sigmoid,
            ],
            &mut r,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input() {
        let layer =
            DenseLayer::new(Array2::eye(3), Array1::zeros(3), Activation::Identity).unwrap();
        let net = DenseNet::new(NetRole::Generator, vec![layer]).unwrap();
        let x = array![[0.5, -1.0, 2.0]];
        assert_eq!(forward(&net, &x, &Exec::Exact).unwrap().output(), &x);
    }

    #[test]
    fn rejects_broken_chains_and_inputs() {
        let a = DenseLayer::new(Array2::zeros((4, 3)), Array1::zeros(4), Activation::Tanh).unwrap();
        let b = DenseLayer::new(Array2::zeros((2, 5)), Array1::zeros(2), Activation::Tanh).unwrap();
        assert!(DenseNet::new(NetRole::Discriminator, vec![a, b]).is_err());
        let net = small_net(1);
        assert!(forward(&net, &Array2::zeros((1, 4)), &Exec::Exact).is_err());
    }

    #[test]
    fn tanh_outputs_are_bounded() {
        let mut r = rng::stream(2, 0);
        let net = DenseNet::mlp(
            NetRole::Generator,
            &[4, 8, 6],
            &[Activation::LeakyRelu(0.2), Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let x = Array2::from_shape_fn((10, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let out = forward(&net, &x, &Exec::Exact).unwrap().into_output();
        assert!(out.iter().all(|v| *v > -1.0 && *v < 1.0));
    }

    #[test]
    fn linear_layer_gradients() {
        let layer =
            DenseLayer::new(array![[0.3, -0.2]], array![0.1], Activation::Identity).unwrap();
        let mut net = DenseNet::new(NetRole::Generator, vec![layer]).unwrap();
        let x = array![[2.0, -3.0]];
        let rec = forward(&net, &x, &Exec::Exact).unwrap();
        let dx = backward(&mut net, &rec, &array![[1.0]]).unwrap();
        assert_eq!(net.layers[0].grad_w, x);
        assert_eq!(net.layers[0].grad_b, array![1.0]);
        assert_eq!(dx, array![[0.3, -0.2]]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = small_net(3);
        let x = array![[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0]];
        let rec = forward(&net, &x, &Exec::Exact).unwrap();
        backward(&mut net, &rec, &Array2::zeros((2, 2))).unwrap();
        assert!((0..net.param_count()).all(|i| net.grad(i) == 0.0));
    }

    #[test]
    fn stale_records_are_rejected() {
        let mut net = small_net(4);
        let x = array![[0.1, 0.2, 0.3]];
        let rec = forward(&net, &x, &Exec::Exact).unwrap();
        net.bump_generation();
        assert!(matches!(
            backward(&mut net, &rec, &Array2::ones((1, 2))),
            Err(Error::StaleRecord(_))
        ));
    }

    #[test]
    fn input_gradient_leaves_buffers_alone() {
        let mut net = small_net(5);
        let x = array![[0.1, 0.2, 0.3]];
        let rec = forward(&net, &x, &Exec::Exact).unwrap();
        let up = Array2::ones((1, 2));
        let a = input_gradient(&net, &rec, &up).unwrap();
        assert!((0..net.param_count()).all(|i| net.grad(i) == 0.0));
        let b = backward(&mut net, &rec, &up).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hardware_without_noise_matches_exact() {
        let net = small_net(6);
        let x = Array2::from_shape_fn((7, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let hw = HardwareExec::new(TensorCore::prototype(NoiseSpec::noiseless(), 1), 1.0);
        let a = forward(&net, &x, &Exec::Exact).unwrap().into_output();
        let b = forward(&net, &x, &Exec::Hardware(&hw))
            .unwrap()
            .into_output();
        let diff = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-10, "max diff {diff}");
    }

    #[test]
    fn flat_parameter_indexing_round_trips() {
        let mut net = small_net(7);
        let n = net.param_count();
        assert_eq!(n, 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
        net.set_param(n - 1, 9.0);
        assert_eq!(net.layers[2].bias[1], 9.0);
        net.set_param(20, -3.0);
        assert_eq!(net.layers[1].weights[[0, 0]], -3.0);
        assert_eq!(net.param(20), -3.0);
    }
}
