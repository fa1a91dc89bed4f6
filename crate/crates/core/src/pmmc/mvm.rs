use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::program::{program_array, program_direct};
use super::{LayerMapping, NoiseRegime, ProgramMode, TensorCore};
use crate::error::{Error, Result};
use crate::par;

/// Noisy product of the programmed contrasts with `x`; read noise is additive on each output.
pub fn mvm(core: &mut TensorCore, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != core.cols() {
        return Err(Error::Shape(format!(
            "input of length {} for a core with {} columns",
            x.len(),
            core.cols()
        )));
    }
    let gammas: Vec<f64> = core.cells().iter().map(|c| c.programmed_gamma).collect();
    let mut y = vec![0.0; core.rows()];
    tile_mvm(core, &gammas, x, &mut y);
    Ok(y)
}

fn tile_mvm(core: &mut TensorCore, gammas: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = core.cols();
    let read_std = core.noise.read_std;
    for (i, o) in out.iter_mut().enumerate() {
        let row = &gammas[i * cols..(i + 1) * cols];
        let mut acc: f64 = row.iter().zip(x).map(|(g, v)| g * v).sum();
        if read_std > 0.0 {
            let z: f64 = core.rng_mut().sample(StandardNormal);
            acc += read_std * z;
        }
        *o = acc;
    }
}

/// Plain dense product `w · x`, the noiseless reference.
pub fn dense_matvec(w: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    w.rows()
        .into_iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// [`tiled_matvec_keyed`] for a single deployed matrix.
pub fn tiled_matvec(
    core: &mut TensorCore,
    w_full: &Array2<f64>,
    x: &[f64],
    m: &LayerMapping,
) -> Result<Vec<f64>> {
    tiled_matvec_keyed(core, 0, w_full, x, m)
}

/// Computes `w_full · x` on a core smaller than the matrix.
///
/// The matrix is cut into core-sized tiles (edge tiles are zero padded). Every tile is
/// mapped to contrasts, programmed, multiplied with its input slice and the partial sums are
/// scaled back into weight units. Under `FixedPerDeployment` the first programming of each
/// `(key, tile)` position is cached and reused; `key` distinguishes the matrices of one
/// deployment (e.g. network layers).
pub fn tiled_matvec_keyed(
    core: &mut TensorCore,
    key: u64,
    w_full: &Array2<f64>,
    x: &[f64],
    m: &LayerMapping,
) -> Result<Vec<f64>> {
    let (n_out, n_in) = w_full.dim();
    if x.len() != n_in {
        return Err(Error::Shape(format!(
            "input of length {} for a {n_out}x{n_in} matrix",
            x.len()
        )));
    }
    if let Some(bad) = w_full.iter().find(|v| !(v.abs() <= m.w_max)) {
        return Err(Error::Range(format!(
            "weight {bad} exceeds the mapped range |W|max = {}",
            m.w_max
        )));
    }
    let (rows, cols) = (core.rows(), core.cols());
    let to_gamma = m.to_gamma_scale();
    let to_weight = m.to_weight_scale();
    let fixed = core.noise.regime == NoiseRegime::FixedPerDeployment;

    let mut y = vec![0.0; n_out];
    let mut targets = vec![0.0; rows * cols];
    let mut x_tile = vec![0.0; cols];
    let mut partial = vec![0.0; rows];
    for tr in 0..n_out.div_ceil(rows) {
        for tc in 0..n_in.div_ceil(cols) {
            x_tile.fill(0.0);
            for (j, xv) in x_tile.iter_mut().enumerate() {
                if let Some(v) = x.get(tc * cols + j) {
                    *xv = *v;
                }
            }
            let tile_key = (key, tr, tc);
            let cached = if fixed {
                core.fixed_tiles.get(&tile_key).cloned()
            } else {
                None
            };
            let gammas = match cached {
                Some(g) => g,
                None => {
                    targets.fill(0.0);
                    for i in 0..rows {
                        let r = tr * rows + i;
                        if r >= n_out {
                            break;
                        }
                        for j in 0..cols {
                            let c = tc * cols + j;
                            if c < n_in {
                                targets[i * cols + j] = w_full[[r, c]] * to_gamma;
                            }
                        }
                    }
                    program_tile(core, &targets)?;
                    let g: Vec<f64> = core.cells().iter().map(|c| c.programmed_gamma).collect();
                    if fixed {
                        Arc::make_mut(&mut core.fixed_tiles).insert(tile_key, g.clone());
                    }
                    g
                }
            };
            tile_mvm(core, &gammas, &x_tile, &mut partial);
            for (i, p) in partial.iter().enumerate() {
                let r = tr * rows + i;
                if r < n_out {
                    y[r] += to_weight * p;
                }
            }
        }
    }
    Ok(y)
}

fn program_tile(core: &mut TensorCore, targets: &[f64]) -> Result<()> {
    match core.mode {
        ProgramMode::Direct => {
            program_direct(core, targets);
            Ok(())
        }
        ProgramMode::Iterative(_) => {
            let t = Array2::from_shape_vec((core.rows(), core.cols()), targets.to_vec())
                .expect("tile buffer matches core shape");
            program_array(core, &t)
        }
    }
}

/// Distribution of MVM inputs for error statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputDist {
    Uniform { lo: f64, hi: f64 },
    Gaussian { std: f64 },
}

impl InputDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InputDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            InputDist::Gaussian { std } => std * rng.sample::<f64, _>(StandardNormal),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            InputDist::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            InputDist::Gaussian { std } => std * std,
        }
    }
}

impl Default for InputDist {
    fn default() -> Self {
        InputDist::Uniform { lo: 0.0, hi: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorHistogram {
    pub bin_centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub bin_width: f64,
}

impl ErrorHistogram {
    pub fn from_samples(samples: &[f64], bins: usize) -> Self {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() || !(hi > lo) {
            let center = if samples.is_empty() { 0.0 } else { lo };
            return Self {
                bin_centers: vec![center],
                counts: vec![samples.len()],
                bin_width: 0.0,
            };
        }
        let bins = bins.max(1);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for s in samples {
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self {
            bin_centers: (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect(),
            counts,
            bin_width: width,
        }
    }
}

/// Pooled MVM errors with a fitted Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct MvmErrorStats {
    pub errors: Vec<f64>,
    pub histogram: ErrorHistogram,
    pub mean: f64,
    pub std: f64,
}

pub const ERROR_HISTOGRAM_BINS: usize = 41;

/// Runs `n_ops` MVMs, each on a freshly programmed copy of the core's target contrasts,
/// and pools the output errors against the noiseless product of the targets.
pub fn mvm_error_stats(
    core: &TensorCore,
    n_ops: usize,
    input_dist: InputDist,
) -> Result<MvmErrorStats> {
    if n_ops < 100 {
        return Err(Error::Config(format!(
            "need at least 100 MVM operations, got {n_ops}"
        )));
    }
    let targets = core.targets();
    let per_op = par::try_map_indexed(n_ops, |op| -> Result<Vec<f64>> {
        let mut c = core.fork(op as u64 + 1);
        c.clear_deployment();
        program_array(&mut c, &targets)?;
        let x: Vec<f64> = (0..c.cols())
            .map(|_| input_dist.sample(c.rng_mut()))
            .collect();
        let noisy = mvm(&mut c, &x)?;
        let exact = dense_matvec(&targets, &x);
        Ok(noisy.iter().zip(&exact).map(|(a, b)| a - b).collect())
    })?;
    let errors: Vec<f64> = per_op.into_iter().flatten().collect();
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(MvmErrorStats {
        histogram: ErrorHistogram::from_samples(&errors, ERROR_HISTOGRAM_BINS),
        errors,
        mean,
        std,
    })
}

/// Error-propagation prediction for the STD of one MVM output: independent write errors on
/// `cols` contrasts weighted by the inputs, plus read noise.
pub fn predicted_mvm_error_std(
    write_std: f64,
    read_std: f64,
    input: InputDist,
    cols: usize,
) -> f64 {
    (write_std * write_std * cols as f64 * input.second_moment() + read_std * read_std).sqrt()
}
