//! Generation quality: a small feature classifier, Frechet distance between feature
//! Gaussians, class-diversity STD and ideal-versus-noisy reports.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::gan::{generate_from_latents, sample_latents, TrainConfig, IMAGE_PIXELS};
use crate::nn::{
    adam_update, backward, forward, softmax_cross_entropy, Activation, AdamConfig, AdamState,
    DenseNet, Exec, NetRole,
};
use crate::pmmc::NoiseSpec;
use crate::rng;

/// Eigenvalue floor used to repair covariance matrices that are indefinite at machine
/// precision.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Default number of images on each side of an FID comparison.
pub const DEFAULT_FID_BATCH: usize = 2000;

/// Smallest batch [`fid_score`] accepts by default.
pub const MIN_FID_BATCH: usize = 500;

pub const NUM_CLASSES: usize = 10;

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_array(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Principal square root of a symmetric PSD matrix, negative eigenvalues clipped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = sym_eigen(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Gaussian fit of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub n: usize,
}

impl FeatureStats {
    /// Validates dimensions, finiteness and symmetry. A covariance with an eigenvalue below
    /// [`EIGEN_FLOOR`] is rebuilt with its spectrum floored there.
    pub fn new(mu: Array1<f64>, sigma: Array2<f64>, n: usize) -> Result<Self> {
        let f = mu.len();
        if sigma.dim() != (f, f) {
            return Err(Error::Shape(format!(
                "covariance {:?} for a {f}-dimensional mean",
                sigma.dim()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature statistics must be finite".into()));
        }
        let scale = sigma.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..f {
            for j in 0..i {
                if (sigma[[i, j]] - sigma[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::Range(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let e = sym_eigen(&to_dmatrix(&sigma));
        let sigma = if e.eigenvalues.iter().any(|l| *l < EIGEN_FLOOR) {
            let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(EIGEN_FLOOR)));
            let fixed = &e.eigenvectors * d * e.eigenvectors.transpose();
            let fixed = (&fixed + fixed.transpose()) * 0.5;
            to_array(&fixed)
        } else {
            sigma
        };
        Ok(Self { mu, sigma, n })
    }

    /// Mean and unbiased covariance of the rows of `features`.
    pub fn from_features(features: &Array2<f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::Range(format!(
                "need at least 2 feature rows, got {n}"
            )));
        }
        let mu = features.mean_axis(Axis(0)).expect("non-empty");
        let centered = features - &mu;
        let mut sigma = centered.t().dot(&centered) / (n as f64 - 1.0);
        let f = sigma.nrows();
        for i in 0..f {
            for j in 0..i {
                let v = 0.5 * (sigma[[i, j]] + sigma[[j, i]]);
                sigma[[i, j]] = v;
                sigma[[j, i]] = v;
            }
        }
        Self::new(mu, sigma, n)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa^{1/2} Σb Σa^{1/2})^{1/2})`.
///
/// The trace of the square root equals the nuclear norm of `Σb^{1/2} Σa^{1/2}`, since
/// `(Σb^{1/2} Σa^{1/2})ᵀ (Σb^{1/2} Σa^{1/2}) = Σa^{1/2} Σb Σa^{1/2}`. Summing singular values
/// avoids the square-root loss of precision on near-zero eigenvalues.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if [a, b]
        .iter()
        .any(|s| s.mu.iter().chain(s.sigma.iter()).any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("feature statistics must be finite".into()));
    }
    let diff = &a.mu - &b.mu;
    let ra = sqrt_psd(&to_dmatrix(&a.sigma));
    let rb = sqrt_psd(&to_dmatrix(&b.sigma));
    let tr_sqrt: f64 = (rb * ra).singular_values().iter().sum();
    Ok(diff.dot(&diff) + a.sigma.diag().sum() + b.sigma.diag().sum() - 2.0 * tr_sqrt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub leaky_slope: f64,
    pub seed: u64,
    /// Held-out accuracy below this fails training.
    pub min_accuracy: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig {
                learning_rate: 1e-3,
                beta1: 0.9,
                ..AdamConfig::default()
            },
            leaky_slope: 0.2,
            seed: 0,
            min_accuracy: 0.92,
        }
    }
}

fn check_labeled(images: &Array2<f64>, labels: &[u8]) -> Result<()> {
    if images.nrows() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.nrows(),
            labels: labels.len(),
        });
    }
    if images.nrows() == 0 {
        return Err(Error::Empty("labeled set is empty".into()));
    }
    Ok(())
}

/// Class predicted for every image.
pub fn predict(clf: &DenseNet, images: &Array2<f64>) -> Result<Vec<usize>> {
    let logits = forward(clf, images, &Exec::Exact)?.into_output();
    Ok(logits
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
                    if *v > bv {
                        (i, *v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect())
}

pub fn accuracy(clf: &DenseNet, images: &Array2<f64>, labels: &[u8]) -> Result<f64> {
    check_labeled(images, labels)?;
    let hits = predict(clf, images)?
        .iter()
        .zip(labels)
        .filter(|(p, l)| **p == **l as usize)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Trains the `196 → hidden… → 10` feature classifier on `train` and checks its accuracy on
/// `heldout`. Returns the network and the held-out accuracy.
pub fn train_feature_classifier(
    train: (&Array2<f64>, &[u8]),
    heldout: (&Array2<f64>, &[u8]),
    cfg: &ClassifierConfig,
) -> Result<(DenseNet, f64)> {
    let (x, y) = train;
    check_labeled(x, y)?;
    check_labeled(heldout.0, heldout.1)?;
    if x.ncols() != IMAGE_PIXELS {
        return Err(Error::Shape(format!(
            "classifier input must have {IMAGE_PIXELS} pixels"
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut init = rng::stream(cfg.seed, 0);
    let mut sizes = vec![IMAGE_PIXELS];
    sizes.extend(&cfg.hidden);
    sizes.push(NUM_CLASSES);
    let mut acts = vec![Activation::LeakyRelu(cfg.leaky_slope); cfg.hidden.len()];
    acts.push(Activation::Identity);
    let mut clf = DenseNet::mlp(NetRole::FeatureClassifier, &sizes, &acts, &mut init)?;
    let mut opt = AdamState::new(&clf, cfg.adam);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut shuffle = rng::stream(cfg.seed, 1);
    let batch = cfg.batch_size.min(x.nrows());
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for idx in order.chunks_exact(batch) {
            let xb = x.select(Axis(0), idx);
            let yb: Vec<u8> = idx.iter().map(|i| y[*i]).collect();
            let rec = forward(&clf, &xb, &Exec::Exact)?;
            let (loss, grad) = softmax_cross_entropy(rec.output(), &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: opt.step() as usize,
                    detail: "classifier loss is not finite".into(),
                });
            }
            backward(&mut clf, &rec, &grad)?;
            adam_update(&mut clf, &mut opt)?;
        }
    }
    let acc = accuracy(&clf, heldout.0, heldout.1)?;
    if acc < cfg.min_accuracy {
        return Err(Error::Quality(format!(
            "feature classifier reached {:.4} held-out accuracy, below {:.4}",
            acc, cfg.min_accuracy
        )));
    }
    Ok((clf, acc))
}

/// Penultimate-layer activations of the classifier.
pub fn features(clf: &DenseNet, images: &Array2<f64>) -> Result<Array2<f64>> {
    let mut rec = forward(clf, images, &Exec::Exact)?;
    let depth = rec.activations.len();
    Ok(rec.activations.swap_remove(depth - 2))
}

pub fn feature_stats(clf: &DenseNet, images: &Array2<f64>) -> Result<FeatureStats> {
    FeatureStats::from_features(&features(clf, images)?)
}

/// FID between two image batches (pixels in `[-1, 1]`), each of at least `min_batch` images.
pub fn fid_score(
    generated: &Array2<f64>,
    reference: &Array2<f64>,
    clf: &DenseNet,
    min_batch: usize,
) -> Result<f64> {
    for (name, b) in [("generated", generated), ("reference", reference)] {
        if b.nrows() < min_batch {
            return Err(Error::Range(format!(
                "{name} batch has {} images, need at least {min_batch}",
                b.nrows()
            )));
        }
    }
    frechet_distance(
        &feature_stats(clf, generated)?,
        &feature_stats(clf, reference)?,
    )
}

/// Population STD of per-class percentages.
pub fn diversity_from_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return 0.0;
    }
    let pct: Vec<f64> = counts
        .iter()
        .map(|c| 100.0 * *c as f64 / total as f64)
        .collect();
    let mean = pct.iter().sum::<f64>() / pct.len() as f64;
    (pct.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / pct.len() as f64).sqrt()
}

/// Class-diversity STD of a batch under the classifier; 0 means uniform class coverage.
pub fn diversity_std(generated: &Array2<f64>, clf: &DenseNet) -> Result<f64> {
    if generated.nrows() == 0 {
        return Err(Error::Empty("diversity needs at least one image".into()));
    }
    let mut counts = vec![0usize; clf.out_dim()];
    for p in predict(clf, generated)? {
        counts[p] += 1;
    }
    Ok(diversity_from_counts(&counts))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidReport {
    pub fid_ideal: f64,
    pub fid_noisy: f64,
    pub delta_fid: f64,
    /// Diversity of the noisy batch; present for ten-digit evaluations.
    pub diversity_std: Option<f64>,
    pub n_generated: usize,
    pub n_reference: usize,
}

/// A frozen classifier with the reference statistics precomputed.
#[derive(Clone, Debug)]
pub struct FidEvaluator {
    pub classifier: DenseNet,
    pub reference: FeatureStats,
    pub n_generated: usize,
}

impl FidEvaluator {
    /// `reference` pixels in `[-1, 1]`.
    pub fn new(classifier: DenseNet, reference: &Array2<f64>, n_generated: usize) -> Result<Self> {
        if reference.nrows() < MIN_FID_BATCH || n_generated < MIN_FID_BATCH {
            return Err(Error::Range(format!(
                "FID batches need at least {MIN_FID_BATCH} images (reference {}, generated {n_generated})",
                reference.nrows()
            )));
        }
        let reference = feature_stats(&classifier, reference)?;
        Ok(Self {
            classifier,
            reference,
            n_generated,
        })
    }

    /// FID of a batch with pixels in `[-1, 1]`.
    pub fn fid(&self, images: &Array2<f64>) -> Result<f64> {
        frechet_distance(&feature_stats(&self.classifier, images)?, &self.reference)
    }

    /// Ideal and noisy generation from the same latents, both scored against the reference.
    /// `seed` fixes the latents and the deployment noise.
    pub fn evaluate_run(
        &self,
        gen: &DenseNet,
        cfg: &TrainConfig,
        noise: NoiseSpec,
        seed: u64,
        with_diversity: bool,
    ) -> Result<FidReport> {
        let z = sample_latents(
            self.n_generated,
            gen.in_dim(),
            cfg.infer_sigma,
            cfg.latent_mode,
            seed,
        )?;
        let to_model = |img: Array2<f64>| img.mapv(|p| 2.0 * p - 1.0);
        let ideal = to_model(generate_from_latents(gen, &z, &Exec::Exact)?);
        let hw_cfg = TrainConfig {
            noise,
            ..cfg.clone()
        };
        let hw = hw_cfg.hardware_exec(rng::derive_seed(seed, 0x4857));
        let noisy = if noise.is_noiseless() {
            ideal.clone()
        } else {
            to_model(generate_from_latents(gen, &z, &Exec::Hardware(&hw))?)
        };
        let fid_ideal = self.fid(&ideal)?;
        let fid_noisy = self.fid(&noisy)?;
        let diversity_std = if with_diversity {
            Some(diversity_std(&noisy, &self.classifier)?)
        } else {
            None
        };
        Ok(FidReport {
            fid_ideal,
            fid_noisy,
            delta_fid: fid_noisy - fid_ideal,
            diversity_std,
            n_generated: self.n_generated,
            n_reference: self.reference.n,
        })
    }
}

/// One-shot form of [`FidEvaluator::evaluate_run`].
pub fn evaluate_run(
    gen: &DenseNet,
    cfg: &TrainConfig,
    noise: NoiseSpec,
    clf: &DenseNet,
    reference: &Array2<f64>,
    seed: u64,
    with_diversity: bool,
) -> Result<FidReport> {
    FidEvaluator::new(clf.clone(), reference, DEFAULT_FID_BATCH)?.evaluate_run(
        gen,
        cfg,
        noise,
        seed,
        with_diversity,
    )
}
