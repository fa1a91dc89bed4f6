#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::Rng;

use pgan_core::harness::{load_split, MnistSet, Split};

/// MNIST directory from `PGAN_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("PGAN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

pub fn mnist() -> Option<(MnistSet, MnistSet)> {
    let dir = mnist_dir()?;
    Some((
        load_split(&dir, Split::Train).expect("train split"),
        load_split(&dir, Split::Test).expect("test split"),
    ))
}

/// Box-Muller normal draws, independent of the crate's samplers.
pub fn reference_normals<R: Rng>(n: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        out.push(sigma * r * t.cos());
        out.push(sigma * r * t.sin());
    }
    out.truncate(n);
    out
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (
        m,
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    )
}

/// Population excess kurtosis and skewness, written out directly.
pub fn skew_kurt(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `n` synthetic images with a bright stroke whose position depends on the row index.
pub fn synthetic_images(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, 196), |(i, j)| {
        let (r, c) = (j / 14, j % 14);
        let col = 3 + (i % 8);
        if c == col && (2..12).contains(&r) || (r == 2 && (3..11).contains(&c) && i % 3 == 0) {
            0.9
        } else {
            -1.0
        }
    })
}
