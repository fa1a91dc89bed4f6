use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{clamp_gamma, PmmcCell, TensorCore, GAMMA_SPAN};
use crate::error::{Error, Result};

/// Optical pulse train used by iterative programming.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSchedule {
    /// Largest contrast change one pulse can make.
    pub pulse_step: f64,
    /// Programming stops once the contrast is within `tol` of the target.
    pub tol: f64,
    pub max_pulses: usize,
}

impl PulseSchedule {
    pub fn new(pulse_step: f64, tol: f64, max_pulses: usize) -> Result<Self> {
        if !(pulse_step > 0.0) || !(tol > 0.0) {
            return Err(Error::Config(format!(
                "pulse_step and tol must be positive, got {pulse_step} and {tol}"
            )));
        }
        Ok(Self {
            pulse_step,
            tol,
            max_pulses,
        })
    }
}

impl Default for PulseSchedule {
    fn default() -> Self {
        Self {
            pulse_step: 0.05,
            tol: 0.01,
            max_pulses: 200,
        }
    }
}

/// How [`program_array`] writes each cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProgramMode {
    /// Target plus one Gaussian write error; used for bulk simulation.
    Direct,
    /// Full pulse-by-pulse programming from the current state.
    Iterative(PulseSchedule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProgramStatus {
    Converged,
    /// The pulse budget ran out before reaching the tolerance band.
    MaxPulsesReached,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramOutcome {
    pub final_gamma: f64,
    pub pulses_used: usize,
    /// Contrast after each pulse.
    pub trajectory: Vec<f64>,
    pub status: ProgramStatus,
}

impl ProgramOutcome {
    pub fn converged(&self) -> bool {
        self.status == ProgramStatus::Converged
    }
}

/// Programs one cell toward `target` with a pulse train.
///
/// Each pulse moves the contrast by at most `pulse_step` and adds a disturbance whose STD is
/// `write_std` scaled by the fraction of the contrast span the pulse covered. Once the loop
/// stops, one terminal write error of STD `write_std` is applied, then clamping and optional
/// quantization. A cell already at its target takes no pulses and is left untouched.
pub fn program_iterative<R: Rng + ?Sized>(
    cell: &mut PmmcCell,
    target: f64,
    schedule: &PulseSchedule,
    write_std: f64,
    rng: &mut R,
) -> Result<ProgramOutcome> {
    if !(target.abs() <= 1.0) {
        return Err(Error::Range(format!(
            "target contrast {target} outside [-1, 1]"
        )));
    }
    if !(schedule.pulse_step > 0.0 && schedule.tol > 0.0) {
        return Err(Error::Config("pulse_step and tol must be positive".into()));
    }
    if !(write_std >= 0.0) {
        return Err(Error::Config(format!(
            "write_std must be >= 0, got {write_std}"
        )));
    }
    cell.target_gamma = target;

    let mut gamma = cell.programmed_gamma;
    let mut trajectory = Vec::new();
    while (target - gamma).abs() > schedule.tol && trajectory.len() < schedule.max_pulses {
        let step = (target - gamma).clamp(-schedule.pulse_step, schedule.pulse_step);
        let disturbance_std = write_std * step.abs() / GAMMA_SPAN;
        let z: f64 = rng.sample(StandardNormal);
        gamma = clamp_gamma(gamma + step + disturbance_std * z);
        trajectory.push(gamma);
    }
    let status = if (target - gamma).abs() <= schedule.tol {
        ProgramStatus::Converged
    } else {
        ProgramStatus::MaxPulsesReached
    };
    if !trajectory.is_empty() {
        let z: f64 = rng.sample(StandardNormal);
        gamma = cell.settle(gamma + write_std * z);
        cell.programmed_gamma = gamma;
    }
    Ok(ProgramOutcome {
        final_gamma: cell.programmed_gamma,
        pulses_used: trajectory.len(),
        trajectory,
        status,
    })
}

/// Terminal programming errors for repeated writes of each target.
///
/// The cell cycles through `targets` in order, so every write starts from the previous
/// target's programmed state. Returns `trials` errors `final − target` per target.
pub fn program_error_trials(
    targets: &[f64],
    trials: usize,
    schedule: &PulseSchedule,
    write_std: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if targets.len() < 2 {
        return Err(Error::Config(
            "need at least two distinct targets to cycle through".into(),
        ));
    }
    let mut rng = crate::rng::stream(seed, 0);
    let mut cell = PmmcCell::new(None);
    cell.reset(targets[targets.len() - 1]);
    let mut errors = vec![Vec::with_capacity(trials); targets.len()];
    for _ in 0..trials {
        for (k, &t) in targets.iter().enumerate() {
            let out = program_iterative(&mut cell, t, schedule, write_std, &mut rng)?;
            errors[k].push(out.final_gamma - t);
        }
    }
    Ok(errors)
}

/// Writes `targets` into every cell of the core with a fresh noise draw.
pub fn program_array(core: &mut TensorCore, targets: &Array2<f64>) -> Result<()> {
    core.check_shape(targets)?;
    if let Some(t) = targets.iter().find(|t| !(t.abs() <= 1.0)) {
        return Err(Error::Range(format!("target contrast {t} outside [-1, 1]")));
    }
    let cols = core.cols();
    let write_std = core.noise.write_std;
    match core.mode {
        super::ProgramMode::Direct => {
            let targets = targets.as_standard_layout();
            program_direct(core, targets.as_slice().expect("standard layout"));
        }
        super::ProgramMode::Iterative(schedule) => {
            let mut stalled = 0usize;
            for ((i, j), &t) in targets.indexed_iter() {
                let mut cell = core.cells()[i * cols + j];
                let out = program_iterative(&mut cell, t, &schedule, write_std, core.rng_mut())?;
                if !out.converged() {
                    stalled += 1;
                }
                core.cells_mut()[i * cols + j] = cell;
            }
            if stalled > 0 {
                return Err(Error::Range(format!(
                    "{stalled} cell(s) did not reach tolerance within {} pulses",
                    schedule.max_pulses
                )));
            }
        }
    }
    Ok(())
}

/// Direct-mode write of a row-major target slice.
pub(crate) fn program_direct(core: &mut TensorCore, targets: &[f64]) {
    let write_std = core.noise.write_std;
    for (k, &target) in targets.iter().enumerate() {
        let z: f64 = if write_std > 0.0 {
            core.rng_mut().sample(StandardNormal)
        } else {
            0.0
        };
        let cell = &mut core.cells_mut()[k];
        cell.target_gamma = target;
        cell.programmed_gamma = cell.settle(target + write_std * z);
    }
}
