//! Phase-change metasurface tensor core.
//!
//! Each cell stores a signed weight as a TE0/TE1 mode contrast `Γ ∈ [-1, 1]`. Software
//! weights are scaled into contrasts per layer ([`LayerMapping`]), written with optical
//! pulses that leave a Gaussian write error, and read out through a noisy incoherent
//! transmission measurement. Matrices larger than the core are processed tile by tile on
//! the same cells.

mod mvm;
mod program;
mod tensor_core;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use self::mvm::{
    dense_matvec, mvm, mvm_error_stats, predicted_mvm_error_std, tiled_matvec, tiled_matvec_keyed,
    ErrorHistogram, InputDist, MvmErrorStats,
};
pub use self::program::{
    program_array, program_error_trials, program_iterative, ProgramMode, ProgramOutcome,
    ProgramStatus, PulseSchedule,
};
pub use self::tensor_core::{TensorCore, TileKey};

/// Width of the contrast range `[-1, 1]`.
pub const GAMMA_SPAN: f64 = 2.0;

/// Optical powers in the two waveguide modes after a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeReadout {
    pub p_te0: f64,
    pub p_te1: f64,
}

impl ModeReadout {
    pub fn new(p_te0: f64, p_te1: f64) -> Result<Self> {
        if !(p_te0 >= 0.0 && p_te1 >= 0.0) || !(p_te0 + p_te1 > 0.0) {
            return Err(Error::Range(format!(
                "mode powers must be non-negative with positive sum, got ({p_te0}, {p_te1})"
            )));
        }
        Ok(Self { p_te0, p_te1 })
    }

    /// Splits `total_power` between the modes so that the readout has contrast `gamma`.
    pub fn from_contrast(gamma: f64, total_power: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&gamma) {
            return Err(Error::Range(format!("contrast {gamma} outside [-1, 1]")));
        }
        Self::new(
            total_power * (1.0 + gamma) / 2.0,
            total_power * (1.0 - gamma) / 2.0,
        )
    }

    pub fn purity_te0(&self) -> f64 {
        self.p_te0 / (self.p_te0 + self.p_te1)
    }

    pub fn purity_te1(&self) -> f64 {
        self.p_te1 / (self.p_te0 + self.p_te1)
    }

    pub fn contrast(&self) -> f64 {
        self.purity_te0() - self.purity_te1()
    }
}

/// One programmable cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmmcCell {
    pub target_gamma: f64,
    pub programmed_gamma: f64,
    pub quant_bits: Option<u32>,
}

impl PmmcCell {
    pub fn new(quant_bits: Option<u32>) -> Self {
        Self {
            target_gamma: 0.0,
            programmed_gamma: 0.0,
            quant_bits,
        }
    }

    /// Forces the stored contrast to `gamma` (clamped) without any write error.
    pub fn reset(&mut self, gamma: f64) {
        self.programmed_gamma = clamp_gamma(gamma);
        self.target_gamma = self.programmed_gamma;
    }

    /// Clamps and, if configured, quantizes a raw written contrast.
    pub fn settle(&self, gamma: f64) -> f64 {
        let g = clamp_gamma(gamma);
        match self.quant_bits {
            Some(bits) => quantize(g, bits),
            None => g,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseRegime {
    /// New write-noise draw every time a tile is programmed.
    FreshPerUse,
    /// One draw per tile position, reused for the whole deployment.
    FixedPerDeployment,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// STD of the contrast error left by one programming event.
    pub write_std: f64,
    /// STD of the additive error on each MVM output.
    pub read_std: f64,
    pub regime: NoiseRegime,
}

impl NoiseSpec {
    pub const DEFAULT_WRITE_STD: f64 = 0.05;
    pub const DEFAULT_READ_STD: f64 = 0.005;

    pub fn new(write_std: f64, read_std: f64, regime: NoiseRegime) -> Result<Self> {
        let spec = Self {
            write_std,
            read_std,
            regime,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noiseless() -> Self {
        Self {
            write_std: 0.0,
            read_std: 0.0,
            regime: NoiseRegime::FreshPerUse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.write_std >= 0.0 && self.write_std.is_finite()) {
            return Err(Error::Config(format!(
                "write_std must be >= 0, got {}",
                self.write_std
            )));
        }
        if !(self.read_std >= 0.0 && self.read_std.is_finite()) {
            return Err(Error::Config(format!(
                "read_std must be >= 0, got {}",
                self.read_std
            )));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.write_std == 0.0 && self.read_std == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            write_std: Self::DEFAULT_WRITE_STD,
            read_std: Self::DEFAULT_READ_STD,
            regime: NoiseRegime::FreshPerUse,
        }
    }
}

/// Per-layer scale between software weights and contrasts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerMapping {
    /// Largest absolute weight of the layer.
    pub w_max: f64,
    /// Largest absolute contrast the layer may use.
    pub gamma_max: f64,
}

impl LayerMapping {
    pub fn new(w_max: f64, gamma_max: f64) -> Result<Self> {
        if !(w_max > 0.0 && w_max.is_finite()) {
            return Err(Error::Config(format!(
                "w_max must be positive, got {w_max}"
            )));
        }
        if !(gamma_max > 0.0 && gamma_max <= 1.0) {
            return Err(Error::Config(format!(
                "gamma_max must lie in (0, 1], got {gamma_max}"
            )));
        }
        Ok(Self { w_max, gamma_max })
    }

    /// Mapping for a layer whose largest weight is taken from `weights`. An all-zero layer
    /// gets `w_max = 1`.
    pub fn from_weights(weights: &Array2<f64>, gamma_max: f64) -> Result<Self> {
        let w_max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        Self::new(if w_max > 0.0 { w_max } else { 1.0 }, gamma_max)
    }

    pub fn unity() -> Self {
        Self {
            w_max: 1.0,
            gamma_max: 1.0,
        }
    }

    /// Contrast per unit weight.
    pub fn to_gamma_scale(&self) -> f64 {
        self.gamma_max / self.w_max
    }

    /// Weight per unit contrast; also converts a contrast error into a weight error.
    pub fn to_weight_scale(&self) -> f64 {
        self.w_max / self.gamma_max
    }
}

/// Maps weights onto contrast targets, rejecting weights beyond the layer's range.
pub fn map_weights(w: &Array2<f64>, m: &LayerMapping) -> Result<Array2<f64>> {
    if let Some(bad) = w.iter().find(|v| v.abs() > m.w_max || !v.is_finite()) {
        return Err(Error::Range(format!(
            "weight {bad} exceeds the mapped range |W|max = {}",
            m.w_max
        )));
    }
    let s = m.to_gamma_scale();
    Ok(w.mapv(|v| v * s))
}

/// Converts contrasts back into effective weights.
pub fn unmap(gamma: &Array2<f64>, m: &LayerMapping) -> Array2<f64> {
    let s = m.to_weight_scale();
    gamma.mapv(|g| g * s)
}

pub fn clamp_gamma(g: f64) -> f64 {
    g.clamp(-1.0, 1.0)
}

/// Rounds `g` to the nearest of `2^bits` uniform levels spanning `[-1, 1]`; exact ties go to
/// the level of smaller magnitude.
pub fn quantize(g: f64, bits: u32) -> f64 {
    let levels = 1u64 << bits.clamp(1, 52);
    let last = (levels - 1) as f64;
    let step = GAMMA_SPAN / last;
    let t = (clamp_gamma(g) + 1.0) / step;
    let lo = t.floor();
    let frac = t - lo;
    let k = if frac > 0.5 {
        lo + 1.0
    } else if frac < 0.5 {
        lo
    } else {
        let a = -1.0 + lo * step;
        let b = -1.0 + (lo + 1.0) * step;
        if b.abs() <= a.abs() {
            lo + 1.0
        } else {
            lo
        }
    };
    -1.0 + k.clamp(0.0, last) * step
}
