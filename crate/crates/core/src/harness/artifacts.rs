//! CSV tables, PGM image grids and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gan::IMAGE_PIXELS;
use crate::harness::config::KvConfig;
use crate::harness::SIDE;

/// Images per side of a sample grid.
pub const GRID_SIDE: usize = 7;

/// `v` with 6 significant digits in `%g` style: plain decimals for exponents in
/// `[-5, 6)`, scientific notation otherwise, trailing zeros dropped.
pub fn format_sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A header row plus string cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Shape(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses comma-separated text with a header row. Cells may not contain commas.
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(context, "missing header row"))?
            .split(',')
            .map(str::to_string)
            .collect::<Vec<_>>();
        let mut table = Self {
            header,
            rows: Vec::new(),
        };
        for (i, l) in lines.enumerate() {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            table
                .push(row)
                .map_err(|e| Error::parse(format!("{context} row {}", i + 1), e.to_string()))?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8], context: &str) -> Result<Self> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(context, "truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" {
            return Err(Error::parse(
                context,
                format!("expected P5, found `{}`", fields[0]),
            ));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(context, format!("bad PGM header field `{s}`")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::parse(
                context,
                format!("maxval {maxval} is not supported"),
            ));
        }
        let need = width * height;
        let data = bytes.get(pos..).unwrap_or(&[]);
        if data.len() != need {
            return Err(Error::parse(
                context,
                format!("expected {need} pixel bytes, found {}", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels: data.to_vec(),
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pgm())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes, &path.display().to_string())
    }
}

fn to_byte(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Tiles up to `GRID_SIDE²` images (pixels in `[0, 1]`) row-major into one
/// `98 × 98` picture. Missing tiles stay black.
pub fn image_grid(images: &Array2<f64>) -> Result<GrayImage> {
    if images.ncols() != IMAGE_PIXELS {
        return Err(Error::Shape(format!(
            "grid images must have {IMAGE_PIXELS} pixels, got {}",
            images.ncols()
        )));
    }
    let side = GRID_SIDE * SIDE;
    let mut pixels = vec![0u8; side * side];
    for (k, img) in images
        .rows()
        .into_iter()
        .take(GRID_SIDE * GRID_SIDE)
        .enumerate()
    {
        let (gr, gc) = (k / GRID_SIDE, k % GRID_SIDE);
        for r in 0..SIDE {
            for c in 0..SIDE {
                pixels[(gr * SIDE + r) * side + gc * SIDE + c] = to_byte(img[r * SIDE + c]);
            }
        }
    }
    Ok(GrayImage {
        width: side,
        height: side,
        pixels,
    })
}

/// Reproducibility record written next to every run's outputs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: KvConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &KvConfig) -> Self {
        let mut entries = KvConfig::new();
        entries.merge(config);
        entries.set("command", command);
        entries.set("code_version", env!("CARGO_PKG_VERSION"));
        Self { entries }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.txt");
        write_file(&path, self.entries.to_text().as_bytes())?;
        Ok(path)
    }
}
