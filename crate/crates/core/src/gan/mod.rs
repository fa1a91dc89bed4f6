//! GAN training strategies, the training loop and generation.
//!
//! Four strategies differ only in how noise enters the generator during training:
//!
//! - `NF`: plain training.
//! - `IC`: the latent STD is inflated during training.
//! - `WC`: every generator forward pass uses weights perturbed by a fresh contrast-domain
//!   Gaussian draw, while gradients are taken at the clean weights.
//! - `CR`: `WC` plus a penalty `λ (L(W + ΔW) - L(W))²` on the generator loss.
//!
//! The discriminator is always trained and evaluated exactly.

use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{
    adam_update, backward, bce_fake_grad, bce_real_grad, forward, forward_with_weights, gan_losses,
    generator_loss_grad, input_gradient, Activation, AdamConfig, AdamState, DenseNet, Exec,
    HardwareExec, NetRole,
};
use crate::noise_sources::{sample_all_channels, LatentSourceConfig, SourceMode};
use crate::pmmc::{LayerMapping, NoiseRegime, NoiseSpec, TensorCore};
use crate::rng::{self, StreamRng};

/// Pixels per 14×14 image.
pub const IMAGE_PIXELS: usize = 196;

/// Spectral components per channel when latents come from the ASE source.
pub const LATENT_ASE_COMPONENTS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StrategyKind {
    NF,
    IC { train_sigma: f64 },
    WC { weight_noise_std: f64 },
    CR { weight_noise_std: f64, lambda: f64 },
}

impl StrategyKind {
    pub const DEFAULT_TRAIN_SIGMA: f64 = 0.5;
    pub const DEFAULT_WEIGHT_NOISE: f64 = 0.05;
    pub const DEFAULT_LAMBDA: f64 = 1.0;

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::NF => "nf",
            StrategyKind::IC { .. } => "ic",
            StrategyKind::WC { .. } => "wc",
            StrategyKind::CR { .. } => "cr",
        }
    }

    /// Strategy with default parameters from its short name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nf" => Ok(StrategyKind::NF),
            "ic" => Ok(StrategyKind::IC {
                train_sigma: Self::DEFAULT_TRAIN_SIGMA,
            }),
            "wc" => Ok(StrategyKind::WC {
                weight_noise_std: Self::DEFAULT_WEIGHT_NOISE,
            }),
            "cr" => Ok(StrategyKind::CR {
                weight_noise_std: Self::DEFAULT_WEIGHT_NOISE,
                lambda: Self::DEFAULT_LAMBDA,
            }),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected nf, ic, wc or cr)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategyKind::NF => Ok(()),
            StrategyKind::IC { train_sigma } if train_sigma > 0.0 && train_sigma.is_finite() => {
                Ok(())
            }
            StrategyKind::IC { train_sigma } => Err(Error::Config(format!(
                "IC train_sigma must be positive, got {train_sigma}"
            ))),
            StrategyKind::WC { weight_noise_std }
            | StrategyKind::CR {
                weight_noise_std, ..
            } if !(weight_noise_std >= 0.0 && weight_noise_std.is_finite()) => Err(Error::Config(
                format!("weight_noise_std must be >= 0, got {weight_noise_std}"),
            )),
            StrategyKind::CR { lambda, .. } if !(lambda >= 0.0 && lambda.is_finite()) => Err(
                Error::Config(format!("curvature lambda must be >= 0, got {lambda}")),
            ),
            _ => Ok(()),
        }
    }

    /// Contrast-domain noise STD applied to generator weights during training.
    pub fn weight_noise_std(&self) -> f64 {
        match *self {
            StrategyKind::WC { weight_noise_std }
            | StrategyKind::CR {
                weight_noise_std, ..
            } => weight_noise_std,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub strategy: StrategyKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Latent STD at inference and for every strategy except IC during training.
    pub infer_sigma: f64,
    pub seed: u64,
    /// `|Γ|max` used for every generator layer.
    pub gamma_max: f64,
    /// Deployment noise for hardware generation.
    pub noise: NoiseSpec,
    /// Source of inference latents.
    pub latent_mode: SourceMode,
    pub adam: AdamConfig,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::NF,
            epochs: 30,
            batch_size: 64,
            latent_dim: 16,
            infer_sigma: 0.2,
            seed: 0,
            gamma_max: 1.0,
            noise: NoiseSpec::new(NoiseSpec::DEFAULT_WRITE_STD, 0.0, NoiseRegime::FreshPerUse)
                .expect("valid defaults"),
            latent_mode: SourceMode::IdealGaussian,
            adam: AdamConfig::default(),
            gen_hidden: vec![64, 128],
            disc_hidden: vec![64],
            leaky_slope: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.noise.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if !(self.infer_sigma > 0.0 && self.infer_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "infer_sigma must be positive, got {}",
                self.infer_sigma
            )));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max <= 1.0) {
            return Err(Error::Config(format!(
                "gamma_max must lie in (0, 1], got {}",
                self.gamma_max
            )));
        }
        if self.gen_hidden.contains(&0) || self.disc_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Latent STD used for generator inputs during training.
    pub fn train_sigma(&self) -> f64 {
        match self.strategy {
            StrategyKind::IC { train_sigma } => train_sigma,
            _ => self.infer_sigma,
        }
    }

    pub fn build_generator<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseNet> {
        let mut sizes = vec![self.latent_dim];
        sizes.extend(&self.gen_hidden);
        sizes.push(IMAGE_PIXELS);
        let mut acts = vec![Activation::LeakyRelu(self.leaky_slope); self.gen_hidden.len()];
        acts.push(Activation::Tanh);
        DenseNet::mlp(NetRole::Generator, &sizes, &acts, rng)
    }

    pub fn build_discriminator<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseNet> {
        let mut sizes = vec![IMAGE_PIXELS];
        sizes.extend(&self.disc_hidden);
        sizes.push(1);
        let mut acts = vec![Activation::LeakyRelu(self.leaky_slope); self.disc_hidden.len()];
        acts.push(Activation::Sigmoid);
        DenseNet::mlp(NetRole::Discriminator, &sizes, &acts, rng)
    }

    /// Hardware execution for generation under the configured deployment noise.
    pub fn hardware_exec(&self, seed: u64) -> HardwareExec {
        HardwareExec::new(TensorCore::prototype(self.noise, seed), self.gamma_max)
    }
}

/// Generator weights for one forward pass under `strategy`.
///
/// NF and IC return the clean weights. WC and CR add, per layer, `ΔW = (w_max/gamma_max)·ΔΓ`
/// with `ΔΓ ~ N(0, weight_noise_std²)` drawn fresh for every element, `w_max` taken from the
/// layer's current weights. A zero noise STD draws nothing and returns the clean weights.
pub fn strategy_forward_weights<R: Rng + ?Sized>(
    net: &DenseNet,
    strategy: &StrategyKind,
    gamma_max: f64,
    rng: &mut R,
) -> Result<Vec<Array2<f64>>> {
    let std = strategy.weight_noise_std();
    if std == 0.0 {
        return Ok(net.weights());
    }
    net.layers
        .iter()
        .map(|l| {
            let scale = LayerMapping::from_weights(&l.weights, gamma_max)?.to_weight_scale();
            Ok(l.weights.mapv(|w| {
                let dg: f64 = rng.sample(StandardNormal);
                w + scale * std * dg
            }))
        })
        .collect()
}

/// Independent random streams of one training run.
#[derive(Clone, Debug)]
pub struct TrainRngs {
    /// Batch order and latent draws.
    pub main: StreamRng,
    /// Weight perturbations of WC/CR; kept apart so WC(0) follows NF exactly.
    pub weight_noise: StreamRng,
}

impl TrainRngs {
    pub const INIT_STREAM: u64 = 0;
    pub const MAIN_STREAM: u64 = 1;
    pub const WEIGHT_NOISE_STREAM: u64 = 2;

    pub fn new(seed: u64) -> Self {
        Self {
            main: rng::stream(seed, Self::MAIN_STREAM),
            weight_noise: rng::stream(seed, Self::WEIGHT_NOISE_STREAM),
        }
    }
}

/// Generator, discriminator and optimizer state mid-training.
#[derive(Clone, Debug)]
pub struct GanState {
    pub gen: DenseNet,
    pub disc: DenseNet,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
    pub rngs: TrainRngs,
    pub step: usize,
}

impl GanState {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = rng::stream(cfg.seed, TrainRngs::INIT_STREAM);
        let gen = cfg.build_generator(&mut init)?;
        let disc = cfg.build_discriminator(&mut init)?;
        Ok(Self {
            opt_g: AdamState::new(&gen, cfg.adam),
            opt_d: AdamState::new(&disc, cfg.adam),
            gen,
            disc,
            rngs: TrainRngs::new(cfg.seed),
            step: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub d_loss: f64,
    pub g_loss: f64,
    /// Sample STD of the latent batch fed to the generator for the discriminator update.
    pub latent_std_d: f64,
    /// Same for the generator update.
    pub latent_std_g: f64,
}

fn gaussian_batch<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    sigma: f64,
    rng: &mut R,
) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        sigma * rng.sample::<f64, _>(StandardNormal)
    })
}

fn sample_std(x: &Array2<f64>) -> f64 {
    x.std(1.0)
}

fn column(values: Vec<f64>) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_vec((n, 1), values).expect("column shape")
}

fn probs(out: &Array2<f64>) -> Vec<f64> {
    out.column(0).to_vec()
}

/// One discriminator update on `real` plus fresh fakes, then one generator update on
/// another set of fresh fakes.
pub fn train_step(
    state: &mut GanState,
    real: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<StepStats> {
    if real.ncols() != IMAGE_PIXELS || real.nrows() == 0 {
        return Err(Error::Shape(format!(
            "real batch must be n×{IMAGE_PIXELS} with n >= 1, got {:?}",
            real.dim()
        )));
    }
    let n = real.nrows();
    let sigma = cfg.train_sigma();
    let strategy = cfg.strategy;
    let step = state.step;
    let diverged = |what: &str| Error::Diverged {
        step,
        detail: format!("{what} is not finite"),
    };

    // Discriminator.
    let z_d = gaussian_batch(n, cfg.latent_dim, sigma, &mut state.rngs.main);
    let w_d = strategy_forward_weights(
        &state.gen,
        &strategy,
        cfg.gamma_max,
        &mut state.rngs.weight_noise,
    )?;
    let fake = forward_with_weights(&state.gen, &w_d, &z_d)?.into_output();
    let rec_real = forward(&state.disc, real, &Exec::Exact)?;
    let rec_fake = forward(&state.disc, &fake, &Exec::Exact)?;
    let p_real = probs(rec_real.output());
    let p_fake = probs(rec_fake.output());
    let d_loss = gan_losses(&p_real, &p_fake)?.d_loss;
    if !d_loss.is_finite() {
        return Err(diverged("discriminator loss"));
    }
    backward(&mut state.disc, &rec_real, &column(bce_real_grad(&p_real)))?;
    backward(&mut state.disc, &rec_fake, &column(bce_fake_grad(&p_fake)))?;
    adam_update(&mut state.disc, &mut state.opt_d)?;

    // Generator.
    let z_g = gaussian_batch(n, cfg.latent_dim, sigma, &mut state.rngs.main);
    let w_g = strategy_forward_weights(
        &state.gen,
        &strategy,
        cfg.gamma_max,
        &mut state.rngs.weight_noise,
    )?;
    let rec_g = forward_with_weights(&state.gen, &w_g, &z_g)?;
    let rec_dg = forward(&state.disc, rec_g.output(), &Exec::Exact)?;
    let p = probs(rec_dg.output());
    let g_loss = gan_losses(&p_real, &p)?.g_loss;
    if !g_loss.is_finite() {
        return Err(diverged("generator loss"));
    }
    let up = input_gradient(&state.disc, &rec_dg, &column(generator_loss_grad(&p)))?;
    match strategy {
        StrategyKind::CR { lambda, .. } if lambda > 0.0 => {
            // d/dW [Lp + λ(Lp - Lc)²] = (1 + 2λΔ)∇Lp - 2λΔ∇Lc with Δ = Lp - Lc.
            let rec_c = forward(&state.gen, &z_g, &Exec::Exact)?;
            let rec_dc = forward(&state.disc, rec_c.output(), &Exec::Exact)?;
            let pc = probs(rec_dc.output());
            let g_clean = gan_losses(&p_real, &pc)?.g_loss;
            let delta = g_loss - g_clean;
            let up_c = input_gradient(&state.disc, &rec_dc, &column(generator_loss_grad(&pc)))?;
            backward(&mut state.gen, &rec_g, &(up * (1.0 + 2.0 * lambda * delta)))?;
            backward(&mut state.gen, &rec_c, &(up_c * (-2.0 * lambda * delta)))?;
        }
        _ => {
            backward(&mut state.gen, &rec_g, &up)?;
        }
    }
    adam_update(&mut state.gen, &mut state.opt_g)?;
    // The discriminator's buffers received nothing from the generator update.
    if !state.gen.is_finite() || !state.disc.is_finite() {
        return Err(diverged("a parameter"));
    }
    state.step += 1;
    Ok(StepStats {
        d_loss,
        g_loss,
        latent_std_d: sample_std(&z_d),
        latent_std_g: sample_std(&z_g),
    })
}

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub config: TrainConfig,
    pub loss_trace: Vec<EpochLosses>,
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub steps: usize,
    pub wall_clock: Duration,
    /// Stream ids used for initialization, batching/latents and weight noise.
    pub streams: [u64; 3],
}

/// Full training loop over `data` (`n × 196`, pixels in `[-1, 1]`).
///
/// Each epoch shuffles the data and visits `n / batch_size` full batches (at least one).
pub fn train(cfg: &TrainConfig, data: &Array2<f64>) -> Result<TrainingRun> {
    if data.nrows() == 0 {
        return Err(Error::Empty("training set is empty".into()));
    }
    if data.ncols() != IMAGE_PIXELS {
        return Err(Error::Shape(format!(
            "training images must have {IMAGE_PIXELS} pixels, got {}",
            data.ncols()
        )));
    }
    let start = Instant::now();
    let mut state = GanState::init(cfg)?;
    let batch = cfg.batch_size.min(data.nrows());
    let batches = (data.nrows() / batch).max(1);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut state.rngs.main);
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for b in 0..batches {
            let real = data.select(Axis(0), &order[b * batch..(b + 1) * batch]);
            let s = train_step(&mut state, &real, cfg)?;
            d_sum += s.d_loss;
            g_sum += s.g_loss;
        }
        loss_trace.push(EpochLosses {
            d_loss: d_sum / batches as f64,
            g_loss: g_sum / batches as f64,
        });
    }
    Ok(TrainingRun {
        config: cfg.clone(),
        loss_trace,
        steps: state.step,
        generator: state.gen,
        discriminator: state.disc,
        wall_clock: start.elapsed(),
        streams: [
            TrainRngs::INIT_STREAM,
            TrainRngs::MAIN_STREAM,
            TrainRngs::WEIGHT_NOISE_STREAM,
        ],
    })
}

/// `n` inference latents of STD `sigma`. The ASE source feeds one wavelength channel per
/// latent dimension.
pub fn sample_latents(
    n: usize,
    latent_dim: usize,
    sigma: f64,
    mode: SourceMode,
    seed: u64,
) -> Result<Array2<f64>> {
    if n == 0 || latent_dim == 0 {
        return Err(Error::Config("latent batch must be non-empty".into()));
    }
    match mode {
        SourceMode::IdealGaussian => {
            if !(sigma > 0.0) {
                return Err(Error::Config(format!(
                    "latent sigma must be positive, got {sigma}"
                )));
            }
            Ok(gaussian_batch(
                n,
                latent_dim,
                sigma,
                &mut rng::stream(seed, 0),
            ))
        }
        SourceMode::PhysicalAse => {
            let src = LatentSourceConfig::ase(sigma, LATENT_ASE_COMPONENTS, latent_dim, seed);
            let channels = sample_all_channels(&src, n)?;
            Ok(Array2::from_shape_fn((n, latent_dim), |(i, c)| {
                channels[c].values[i]
            }))
        }
    }
}

/// Generator output for the given latents, rescaled from `[-1, 1]` to `[0, 1]`.
pub fn generate_from_latents(
    gen: &DenseNet,
    z: &Array2<f64>,
    exec: &Exec<'_>,
) -> Result<Array2<f64>> {
    let out = forward(gen, z, exec)?.into_output();
    Ok(out.mapv(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)))
}

/// `n` images from latents of STD `cfg.infer_sigma`; `seed` fixes both the latents and the
/// hardware noise.
pub fn generate(
    gen: &DenseNet,
    n: usize,
    cfg: &TrainConfig,
    exec: &Exec<'_>,
    seed: u64,
) -> Result<Array2<f64>> {
    let z = sample_latents(n, gen.in_dim(), cfg.infer_sigma, cfg.latent_mode, seed)?;
    generate_from_latents(gen, &z, exec)
}
