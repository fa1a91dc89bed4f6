use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gan::IMAGE_PIXELS;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Side of the raw IDX images.
pub const RAW_SIDE: usize = 28;
/// Side after 2×2 mean pooling.
pub const SIDE: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Standard IDX file names for the split.
    pub fn file_names(&self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

/// Downsampled digits with pixels in `[-1, 1]`, one image per row.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistSet {
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl MnistSet {
    pub fn new(images: Array2<f64>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.nrows(),
                labels: labels.len(),
            });
        }
        if images.ncols() != IMAGE_PIXELS {
            return Err(Error::Shape(format!(
                "images must have {IMAGE_PIXELS} pixels"
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l > 9) {
            return Err(Error::Range(format!("label {l} outside 0..=9")));
        }
        if let Some(p) = images.iter().find(|p| !(p.abs() <= 1.0)) {
            return Err(Error::Range(format!("pixel {p} outside [-1, 1]")));
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy of the first `n` samples.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Raw 28×28 images (bytes, row-major per image) from an IDX3 file.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<u8>)> {
    check_len(path, bytes, 4)?;
    let magic = read_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    check_len(path, bytes, 16)?;
    let n = read_u32(bytes, 4) as usize;
    let (rows, cols) = (read_u32(bytes, 8) as usize, read_u32(bytes, 12) as usize);
    if rows != RAW_SIDE || cols != RAW_SIDE {
        return Err(Error::Shape(format!(
            "{}: expected {RAW_SIDE}x{RAW_SIDE} images, found {rows}x{cols}",
            path.display()
        )));
    }
    let expected = 16 + n * rows * cols;
    check_len(path, bytes, expected)?;
    Ok((n, bytes[16..expected].to_vec()))
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    check_len(path, bytes, 4)?;
    let magic = read_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    check_len(path, bytes, 8)?;
    let n = read_u32(bytes, 4) as usize;
    check_len(path, bytes, 8 + n)?;
    Ok(bytes[8..8 + n].to_vec())
}

/// 2×2 mean pooling of one 28×28 image into 14×14 values on the 0..255 scale.
pub fn pool_2x2(raw: &[u8]) -> [f64; IMAGE_PIXELS] {
    let mut out = [0.0; IMAGE_PIXELS];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let at = |dr: usize, dc: usize| raw[(2 * r + dr) * RAW_SIDE + 2 * c + dc] as f64;
            out[r * SIDE + c] = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0;
        }
    }
    out
}

/// Loads an IDX image/label pair, pools to 14×14 and rescales with `p / 127.5 - 1`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<MnistSet> {
    let img_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, raw) = parse_idx_images(images_path, &img_bytes)?;
    let labels = parse_idx_labels(labels_path, &lbl_bytes)?;
    if n != labels.len() {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let px = RAW_SIDE * RAW_SIDE;
    let mut images = Array2::zeros((n, IMAGE_PIXELS));
    for (i, mut row) in images.rows_mut().into_iter().enumerate() {
        let pooled = pool_2x2(&raw[i * px..(i + 1) * px]);
        for (dst, p) in row.iter_mut().zip(pooled) {
            *dst = p / 127.5 - 1.0;
        }
    }
    MnistSet::new(images, labels, split)
}

/// Loads a split from a directory holding the standard IDX file names.
pub fn load_split(dir: &Path, split: Split) -> Result<MnistSet> {
    let (img, lbl) = split.file_names();
    load_mnist_idx(&dir.join(img), &dir.join(lbl), split)
}

/// Samples labelled `digit`, order preserved.
pub fn filter_digit(set: &MnistSet, digit: u8) -> Result<MnistSet> {
    let idx: Vec<usize> = (0..set.len()).filter(|i| set.labels[*i] == digit).collect();
    if idx.is_empty() {
        return Err(Error::Empty(format!("no images of digit {digit}")));
    }
    Ok(MnistSet {
        images: set.images.select(ndarray::Axis(0), &idx),
        labels: vec![digit; idx.len()],
        split: set.split,
    })
}

/// Encodes raw 28×28 images and labels as IDX bytes.
pub fn encode_idx(raw_images: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let n = labels.len();
    let mut img = Vec::with_capacity(16 + raw_images.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, RAW_SIDE as u32, RAW_SIDE as u32] {
        img.extend(v.to_be_bytes());
    }
    img.extend(raw_images);
    let mut lbl = Vec::with_capacity(8 + n);
    lbl.extend(IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend((n as u32).to_be_bytes());
    lbl.extend(labels);
    (img, lbl)
}
