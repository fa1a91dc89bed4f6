//! Desk-scale simulator of a noise-aware photonic generative adversarial network.
//!
//! The crate models a small phase-change tensor core (mode-contrast weight cells with
//! write and read noise), an ASE-derived Gaussian random source for latent inputs, four
//! GAN training strategies that differ in how hardware noise enters training, and the
//! Frechet-distance / class-diversity evaluation used to compare them.
//!
//! Module map:
//!
//! - [`noise_sources`]: latent random sources and their statistical checks.
//! - [`pmmc`]: weight mapping, pulse programming, noisy and tiled matrix-vector products.
//! - [`nn`]: dense layers, reverse-mode gradients, GAN losses, Adam, checkpoints.
//! - [`gan`]: training strategies, the training loop and generation.
//! - [`eval`]: feature classifier, Frechet distance, FID and diversity metrics.
//! - [`harness`]: MNIST ingest, experiment orchestration and artifact emission.
//!
//! Data-parallel loops go through [`par`]; with the `parallel` feature they run on rayon,
//! otherwise sequentially. Every parallel item owns a seeded RNG stream, so results do not
//! depend on the execution mode.

// NaN-rejecting range checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod gan;
pub mod harness;
pub mod nn;
pub mod noise_sources;
pub mod par;
pub mod pmmc;
pub mod rng;

pub use error::{Error, Result};
