use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;

use super::{NoiseSpec, PmmcCell, ProgramMode};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Identifies one tile position of one deployed matrix: `(matrix key, tile row, tile col)`.
pub type TileKey = (u64, usize, usize);

/// A small grid of programmable cells plus its noise model and random stream.
///
/// Programming mutates the cells, so a core belongs to one evaluation stream at a time;
/// [`TensorCore::fork`] gives each parallel item its own copy and stream. Tiles programmed
/// under [`super::NoiseRegime::FixedPerDeployment`] are cached behind an `Arc` and shared by
/// forks.
#[derive(Clone, Debug)]
pub struct TensorCore {
    rows: usize,
    cols: usize,
    cells: Vec<PmmcCell>,
    pub noise: NoiseSpec,
    pub mode: ProgramMode,
    seed: u64,
    rng: StreamRng,
    pub(crate) fixed_tiles: Arc<HashMap<TileKey, Vec<f64>>>,
}

impl TensorCore {
    pub fn new(rows: usize, cols: usize, noise: NoiseSpec, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "core must be at least 1x1, got {rows}x{cols}"
            )));
        }
        noise.validate()?;
        Ok(Self {
            rows,
            cols,
            cells: vec![PmmcCell::new(None); rows * cols],
            noise,
            mode: ProgramMode::Direct,
            seed,
            rng: rng::stream(seed, 0),
            fixed_tiles: Arc::default(),
        })
    }

    /// The 2x2 four-cell core of the lab prototype.
    pub fn prototype(noise: NoiseSpec, seed: u64) -> Self {
        Self::new(2, 2, noise, seed).expect("2x2 core is valid")
    }

    pub fn with_quant_bits(mut self, bits: Option<u32>) -> Self {
        for c in &mut self.cells {
            c.quant_bits = bits;
        }
        self
    }

    pub fn with_mode(mut self, mode: ProgramMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn quant_bits(&self) -> Option<u32> {
        self.cells[0].quant_bits
    }

    pub fn cells(&self) -> &[PmmcCell] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [PmmcCell] {
        &mut self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> &PmmcCell {
        &self.cells[row * self.cols + col]
    }

    pub fn programmed(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| {
            self.cells[i * self.cols + j].programmed_gamma
        })
    }

    pub fn targets(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| {
            self.cells[i * self.cols + j].target_gamma
        })
    }

    /// Sets targets without programming, e.g. as the reference for error statistics.
    pub fn set_targets(&mut self, targets: &Array2<f64>) -> Result<()> {
        self.check_shape(targets)?;
        for ((i, j), t) in targets.indexed_iter() {
            self.cells[i * self.cols + j].target_gamma = *t;
        }
        Ok(())
    }

    pub(crate) fn check_shape(&self, m: &Array2<f64>) -> Result<()> {
        if m.dim() != (self.rows, self.cols) {
            return Err(Error::Shape(format!(
                "expected a {}x{} matrix for the core, got {:?}",
                self.rows,
                self.cols,
                m.dim()
            )));
        }
        Ok(())
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// Switches to stream `stream` of this core's seed.
    pub fn reseed(&mut self, stream: u64) {
        self.rng = rng::stream(self.seed, stream);
    }

    /// Copy of this core on its own random stream, sharing any fixed deployment.
    pub fn fork(&self, stream: u64) -> Self {
        let mut c = self.clone();
        c.reseed(stream);
        c
    }

    /// Discards all tiles fixed by a previous deployment.
    pub fn clear_deployment(&mut self) {
        self.fixed_tiles = Arc::default();
    }

    pub fn deployed_tiles(&self) -> usize {
        self.fixed_tiles.len()
    }
}
