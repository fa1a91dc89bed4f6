//! Latent random sources.
//!
//! Two sources feed the generator: an ideal Gaussian sampler and a phenomenological model
//! of the ASE beat-noise generator. The physical model draws a fixed spectral slice of
//! Rayleigh-distributed component amplitudes per channel; every sample redraws the
//! component phases, square-law detects the slice and keeps the baseband beat notes between
//! neighbouring components (the electrical passband). The constant component powers are
//! pure DC and are removed, together with any residual offset, by an exact block-mean DC
//! block. The output is finally rescaled to the requested standard deviation.
//!
//! Statistics helpers ([`autocorrelation`], [`moment_report`], [`ks_statistic`]) validate
//! the sources.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;

/// Minimum number of spectral components for the beat-noise source to be in the
/// central-limit regime.
pub const MIN_ASE_COMPONENTS: usize = 64;

/// Samples per independently seeded block of the beat-noise source.
const ASE_BLOCK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceMode {
    IdealGaussian,
    PhysicalAse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentSourceConfig {
    pub mode: SourceMode,
    /// Output standard deviation (volts in the lab setup).
    pub sigma: f64,
    /// Number of parallel wavelength channels.
    pub channels: usize,
    /// Spectral components per channel; only used by [`SourceMode::PhysicalAse`].
    pub ase_components: usize,
    pub seed: u64,
}

impl LatentSourceConfig {
    pub fn ideal(sigma: f64, seed: u64) -> Self {
        Self {
            mode: SourceMode::IdealGaussian,
            sigma,
            channels: 1,
            ase_components: MIN_ASE_COMPONENTS,
            seed,
        }
    }

    pub fn ase(sigma: f64, ase_components: usize, channels: usize, seed: u64) -> Self {
        Self {
            mode: SourceMode::PhysicalAse,
            sigma,
            channels,
            ase_components,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "source sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("source needs at least one channel".into()));
        }
        if self.mode == SourceMode::PhysicalAse && self.ase_components < MIN_ASE_COMPONENTS {
            return Err(Error::Config(format!(
                "ASE source needs at least {MIN_ASE_COMPONENTS} spectral components, got {}",
                self.ase_components
            )));
        }
        Ok(())
    }
}

/// One channel's worth of random samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSequence {
    pub values: Vec<f64>,
    pub channel: usize,
    pub source_sigma: f64,
}

impl RandomSequence {
    pub fn new(values: Vec<f64>, channel: usize, source_sigma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("random sequence has no samples".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("random sequence contains {v}")));
        }
        Ok(Self {
            values,
            channel,
            source_sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `n` latent samples from channel 0 of the configured source.
pub fn sample_latent(cfg: &LatentSourceConfig, n: usize) -> Result<RandomSequence> {
    sample_channel(cfg, 0, n)
}

/// Draws `n` samples from one channel. Channels use disjoint random streams.
pub fn sample_channel(
    cfg: &LatentSourceConfig,
    channel: usize,
    n: usize,
) -> Result<RandomSequence> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if channel >= cfg.channels {
        return Err(Error::Config(format!(
            "channel {channel} out of range for a {}-channel source",
            cfg.channels
        )));
    }
    match cfg.mode {
        SourceMode::IdealGaussian => {
            let mut rng = rng::stream(cfg.seed, channel as u64);
            let values = (0..n)
                .map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            RandomSequence::new(values, channel, cfg.sigma)
        }
        SourceMode::PhysicalAse => detect_channel(cfg, channel, n),
    }
}

/// Draws `n` samples from every channel of the source.
pub fn sample_all_channels(cfg: &LatentSourceConfig, n: usize) -> Result<Vec<RandomSequence>> {
    (0..cfg.channels)
        .map(|c| sample_channel(cfg, c, n))
        .collect()
}

/// Runs the beat-noise pipeline for channel 0.
pub fn ase_slice_detect(cfg: &LatentSourceConfig, n: usize) -> Result<RandomSequence> {
    if cfg.mode != SourceMode::PhysicalAse {
        return Err(Error::Config(
            "ase_slice_detect requires the PhysicalAse source mode".into(),
        ));
    }
    sample_channel(cfg, 0, n)
}

fn detect_channel(cfg: &LatentSourceConfig, channel: usize, n: usize) -> Result<RandomSequence> {
    let k = cfg.ase_components;
    let channel_stream = (channel as u64) << 32;

    // Spectral shape of the slice: Rayleigh amplitudes, E[a^2] = 1.
    let mut shape_rng = rng::stream(cfg.seed, channel_stream);
    let amplitudes: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = shape_rng.random();
            (-(1.0 - u).ln()).sqrt()
        })
        .collect();
    let dc_power: f64 = amplitudes.iter().map(|a| a * a).sum();

    let blocks = n.div_ceil(ASE_BLOCK);
    let chunks = par::map_indexed(blocks, |b| {
        let len = ASE_BLOCK.min(n - b * ASE_BLOCK);
        let mut rng = rng::stream(cfg.seed, channel_stream | (b as u64 + 1));
        let mut phasors = vec![(0.0f64, 0.0f64); k];
        (0..len)
            .map(|_| {
                for (p, a) in phasors.iter_mut().zip(&amplitudes) {
                    let phase = 2.0 * PI * rng.random::<f64>();
                    let (s, c) = phase.sin_cos();
                    *p = (a * c, a * s);
                }
                // Square-law detection restricted to the electrical passband:
                // DC term plus beats between neighbouring spectral components.
                let beats: f64 = phasors
                    .windows(2)
                    .map(|w| 2.0 * (w[0].0 * w[1].0 + w[0].1 * w[1].1))
                    .sum();
                dc_power + beats
            })
            .collect::<Vec<f64>>()
    });
    let mut values: Vec<f64> = chunks.into_iter().flatten().collect();

    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let std = if n > 1 {
        (values.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    if std > 0.0 {
        let scale = cfg.sigma / std;
        values.iter_mut().for_each(|v| *v *= scale);
    }
    RandomSequence::new(values, channel, cfg.sigma)
}

/// Normalized sample autocorrelation for lags `1..=max_lag`.
pub fn autocorrelation(seq: &RandomSequence, max_lag: usize) -> Result<Vec<f64>> {
    let x = &seq.values;
    if x.is_empty() {
        return Err(Error::Empty("autocorrelation of an empty sequence".into()));
    }
    if max_lag >= x.len() {
        return Err(Error::Config(format!(
            "max_lag {max_lag} must be below the sequence length {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Ok(vec![0.0; max_lag]);
    }
    Ok(par::map_indexed(max_lag, |i| {
        let lag = i + 1;
        let num: f64 = centered
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        num / denom
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    /// Adjusted Fisher-Pearson skewness.
    pub skew: f64,
    /// Unbiased excess kurtosis.
    pub kurtosis: f64,
}

/// Sample moments with the usual small-sample bias corrections.
pub fn moment_report(seq: &RandomSequence) -> Result<Moments> {
    moments(&seq.values)
}

pub fn moments(x: &[f64]) -> Result<Moments> {
    if x.len() < 2 {
        return Err(Error::Config(format!(
            "moments need at least 2 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = (m2 * n / (n - 1.0)).sqrt();
    if m2 == 0.0 {
        return Ok(Moments {
            mean,
            std: 0.0,
            skew: 0.0,
            kurtosis: 0.0,
        });
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    let skew = if n > 2.0 {
        g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
    } else {
        g1
    };
    let kurtosis = if n > 3.0 {
        ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0))
    } else {
        g2
    };
    Ok(Moments {
        mean,
        std,
        skew,
        kurtosis,
    })
}

/// Normal CDF with the given mean and standard deviation.
pub fn normal_cdf(x: f64, mean: f64, std: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf((x - mean) / (std * std::f64::consts::SQRT_2)))
}

/// Kolmogorov-Smirnov statistic of `samples` against `N(mean, std^2)`.
pub fn ks_statistic(samples: &[f64], mean: f64, std: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x, mean, std);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// KS statistic against a Gaussian fitted by sample mean and standard deviation.
pub fn ks_vs_fitted_gaussian(seq: &RandomSequence) -> Result<f64> {
    let m = moment_report(seq)?;
    Ok(ks_statistic(&seq.values, m.mean, m.std))
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!(
            "pearson needs two equal-length samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok(sab / (saa * sbb).sqrt())
}
