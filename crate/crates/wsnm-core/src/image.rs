//! Grayscale rasters and their plumbing: PGM (P5) and WSNMF64 file formats,
//! quality metrics, seeded Gaussian noise, and procedural test scenes.

use std::fs;
use std::path::Path;

use crate::matrix::DenseMatrix;
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// 2-D grayscale raster, row-major, nominal range [0, 255]. Intermediate
/// processing may leave values outside the range; [`GrayImage::clamped`]
/// restores it before 8-bit output.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(
                "image dimensions must be positive".into(),
            ));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "pixel count {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pixel values must be finite, found {bad}"
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = GrayImage::new(width, height);
        for r in 0..height {
            for c in 0..width {
                img.data[r * width + c] = f(r, c);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel buffer.
    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = v;
    }

    /// Copy with every pixel clamped to [0, 255].
    pub fn clamped(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 255.0)).collect(),
        }
    }

    /// Quantized 8-bit pixels (clamp, then round half away from zero).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| v.clamp(0.0, 255.0).round() as u8)
            .collect()
    }
}

/// Mean squared pixel error.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InvalidInput(format!(
            "image size mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB for 8-bit range: 10·log10(255²/MSE).
/// Identical images return +∞.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / m).log10())
}

/// Seeded additive white Gaussian noise parameters.
#[derive(Clone, Copy, Debug)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Adds i.i.d. N(0, σ²) noise in row-major pixel order using a Box–Muller
/// stream over a splitmix64 generator. Deterministic per seed; output is not
/// clamped so downstream consumers see the raw noisy signal.
pub fn add_gaussian_noise(img: &GrayImage, spec: &NoiseSpec) -> GrayImage {
    assert!(
        spec.sigma.is_finite() && spec.sigma >= 0.0,
        "noise sigma must be finite and non-negative, got {}",
        spec.sigma
    );
    let mut rng = SplitMix64::new(spec.seed);
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        *v += spec.sigma * rng.next_normal();
    }
    out
}

// ---------------------------------------------------------------------------
// PGM (P5, binary, 8-bit)
// ---------------------------------------------------------------------------

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses binary PGM: `P5`, whitespace/comment-separated width, height,
/// maxval ≤ 255, one whitespace byte, then width·height raw pixel bytes.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    let mut pos = 2;
    let width = parse_pgm_int(bytes, &mut pos, "width")?;
    let height = parse_pgm_int(bytes, &mut pos, "height")?;
    let maxval = parse_pgm_int(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "only 8-bit PGM is supported (maxval ≤ 255), got {maxval}"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::Format(
                "expected a single whitespace byte after maxval".into(),
            ))
        }
    }
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::Format(format!(
            "pixel data truncated: expected {expected} bytes, found {}",
            raster.len()
        )));
    }
    let data = raster[..expected].iter().map(|&b| b as f64).collect();
    GrayImage::from_pixels(width, height, data)
}

fn parse_pgm_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    // Skip whitespace and `#`-to-end-of-line comments.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::Format(format!("missing {what} in PGM header")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("invalid {what} in PGM header")))
}

/// Writes canonical binary PGM: `P5\n{w} {h}\n255\n` + quantized pixels.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// WSNMF64: raw float64 raster dump.
// Layout: 16-byte header — 8-byte magic "WSNMF64\0", u32 LE width, u32 LE
// height — followed by width·height f64 little-endian values in row-major
// order. Matrices map as width = cols, height = rows.
// ---------------------------------------------------------------------------

const WF64_MAGIC: [u8; 8] = *b"WSNMF64\0";

fn encode_wf64(width: usize, height: usize, row_major: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + width * height * 8);
    out.extend_from_slice(&WF64_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in row_major {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_wf64(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 16 {
        return Err(Error::Format("WSNMF64 header truncated".into()));
    }
    if bytes[..8] != WF64_MAGIC {
        return Err(Error::Format("missing WSNMF64 magic".into()));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "WSNMF64 dimensions must be positive, got {width}x{height}"
        )));
    }
    let expected = 16 + width * height * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "WSNMF64 payload is {} bytes, expected {expected} for {width}x{height}",
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}

pub fn write_wf64_image(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes = encode_wf64(img.width, img.height, img.data.iter().copied());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_wf64_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    let (width, height, values) = decode_wf64(&bytes)?;
    GrayImage::from_pixels(width, height, values)
}

pub fn write_wf64_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let rows = m.rows();
    let cols = m.cols();
    let row_major = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c)));
    let bytes = encode_wf64(cols, rows, row_major.map(|(r, c)| m.get(r, c)));
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_wf64_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    let (width, height, values) = decode_wf64(&bytes)?;
    let (rows, cols) = (height, width);
    let mut col_major = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            col_major[c * rows + r] = values[r * cols + c];
        }
    }
    DenseMatrix::from_col_major(rows, cols, col_major)
}

// ---------------------------------------------------------------------------
// Procedural test scenes
// ---------------------------------------------------------------------------

/// Deterministic grayscale scenes for experiments and tests. All are
/// piecewise-smooth images with edges and a low-amplitude repeating texture,
/// softened by one binomial blur pass so block matching finds meaningful
/// nonlocal structure.
pub mod synthetic {
    use super::GrayImage;

    /// A house against a sky gradient: roof, chimney, two windows, a door,
    /// and textured ground.
    pub fn house_scene(size: usize) -> GrayImage {
        let img = GrayImage::from_fn(size, size, |r, c| {
            let u = c as f64 / size as f64;
            let v = r as f64 / size as f64;
            // Sky gradient, brighter at the top.
            let mut val = 195.0 - 45.0 * v;
            // Ground.
            if v > 0.78 {
                val = 95.0 + 14.0 * (2.0 * std::f64::consts::PI * 11.0 * u).sin().abs();
            }
            // House body.
            if (0.25..0.75).contains(&u) && (0.42..0.78).contains(&v) {
                val = 152.0;
            }
            // Roof: triangle with apex at (0.5, 0.2) over the body width.
            if (0.20..0.42).contains(&v) {
                let half = 0.32 * (v - 0.20) / 0.22;
                if (u - 0.5).abs() <= half {
                    val = 72.0;
                }
            }
            // Chimney.
            if (0.62..0.68).contains(&u) && (0.22..0.36).contains(&v) {
                val = 84.0;
            }
            // Windows.
            if (0.50..0.60).contains(&v) && ((0.32..0.42).contains(&u) || (0.58..0.68).contains(&u))
            {
                val = 42.0;
            }
            // Door.
            if (0.46..0.54).contains(&u) && (0.62..0.78).contains(&v) {
                val = 60.0;
            }
            val + texture(u, v)
        });
        binomial_blur(&img).clamped()
    }

    /// Horizontal luminance ramp with a bright disk.
    pub fn ramp_scene(size: usize) -> GrayImage {
        let img = GrayImage::from_fn(size, size, |r, c| {
            let u = c as f64 / size as f64;
            let v = r as f64 / size as f64;
            let mut val = 40.0 + 175.0 * u;
            if (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.0625 {
                val = 205.0;
            }
            val + texture(u, v)
        });
        binomial_blur(&img).clamped()
    }

    /// Smooth diagonal stripes split by a luminance step.
    pub fn stripes_scene(size: usize) -> GrayImage {
        let img = GrayImage::from_fn(size, size, |r, c| {
            let u = c as f64 / size as f64;
            let v = r as f64 / size as f64;
            let stripes = 60.0 * (2.0 * std::f64::consts::PI * (3.0 * u + 1.5 * v)).sin();
            let step = if u + v < 0.9 { 30.0 } else { -20.0 };
            128.0 + stripes * 0.9 + step + texture(u, v)
        });
        binomial_blur(&img).clamped()
    }

    /// Soft Gaussian blobs on a mid-gray background.
    pub fn blobs_scene(size: usize) -> GrayImage {
        let img = GrayImage::from_fn(size, size, |r, c| {
            let u = c as f64 / size as f64;
            let v = r as f64 / size as f64;
            let blob = |cu: f64, cv: f64, s: f64| {
                (-((u - cu) * (u - cu) + (v - cv) * (v - cv)) / s).exp()
            };
            110.0 + 95.0 * blob(0.3, 0.35, 0.02) - 65.0 * blob(0.7, 0.65, 0.03)
                + 50.0 * blob(0.75, 0.25, 0.015)
                + texture(u, v)
        });
        binomial_blur(&img).clamped()
    }

    /// Checkerboard of 8×8-cell tiles.
    pub fn checker_scene(size: usize) -> GrayImage {
        let cell = (size / 8).max(1);
        let img = GrayImage::from_fn(size, size, |r, c| {
            let u = c as f64 / size as f64;
            let v = r as f64 / size as f64;
            let val = if ((r / cell) + (c / cell)) % 2 == 0 {
                180.0
            } else {
                80.0
            };
            val + texture(u, v)
        });
        binomial_blur(&img).clamped()
    }

    /// Low-amplitude repeating texture shared by all scenes.
    fn texture(u: f64, v: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        4.0 * (tau * 7.0 * u).sin() * (tau * 9.0 * v).sin()
            + 2.0 * (tau * 23.0 * u + 1.0).sin() * (tau * 19.0 * v).cos()
    }

    /// One pass of the separable 3×3 binomial kernel [1 2 1]/4 per axis,
    /// borders clamped.
    fn binomial_blur(img: &GrayImage) -> GrayImage {
        let w = img.width();
        let h = img.height();
        let at = |r: isize, c: isize| {
            let r = r.clamp(0, h as isize - 1) as usize;
            let c = c.clamp(0, w as isize - 1) as usize;
            img.get(r, c)
        };
        GrayImage::from_fn(w, h, |r, c| {
            let (r, c) = (r as isize, c as isize);
            let mut acc = 0.0;
            for (dr, wr) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
                for (dc, wc) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
                    acc += wr * wc * at(r + dr, c + dc);
                }
            }
            acc / 16.0
        })
    }
}
