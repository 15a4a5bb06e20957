use std::path::Path;

use crate::error::{Error, Result};
use crate::imagecore::io::write_atomic;

/// Per-pixel content-preservation weights.
///
/// Values are finite and non-negative. A map straight out of occlusion
/// scoring is "raw"; [`crate::saliency::normalize_mask`] rescales it into the
/// configured `[alpha_min, alpha_max]` band.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl AlphaMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "alpha map dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Argument(format!(
                "expected {} alpha values for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Argument(format!(
                "alpha value {bad} is not a finite non-negative number"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    /// Anisotropic total variation: sum of absolute differences between
    /// horizontally and vertically adjacent pixels.
    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                let v = f64::from(self.get(y, x));
                if x + 1 < self.width {
                    tv += (f64::from(self.get(y, x + 1)) - v).abs();
                }
                if y + 1 < self.height {
                    tv += (f64::from(self.get(y + 1, x)) - v).abs();
                }
            }
        }
        tv
    }
}

/// Bilinear resampling with corner-aligned sample positions: output pixel 0
/// maps onto input pixel 0 and the last output pixel onto the last input
/// pixel. A one-pixel axis samples the input's center.
pub fn resample_alpha(
    mask: &AlphaMap,
    target_height: usize,
    target_width: usize,
) -> Result<AlphaMap> {
    if target_height == 0 || target_width == 0 {
        return Err(Error::Argument(format!(
            "resample target must be positive, got {target_height}x{target_width}"
        )));
    }
    if mask.dims() == (target_height, target_width) {
        return Ok(mask.clone());
    }
    let ys = sample_positions(mask.height, target_height);
    let xs = sample_positions(mask.width, target_width);
    let (lo, hi) = (mask.min(), mask.max());
    let mut data = Vec::with_capacity(target_height * target_width);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let v00 = f64::from(mask.get(y0, x0));
            let v01 = f64::from(mask.get(y0, x1));
            let v10 = f64::from(mask.get(y1, x0));
            let v11 = f64::from(mask.get(y1, x1));
            let top = v00 + (v01 - v00) * fx;
            let bottom = v10 + (v11 - v10) * fx;
            let v = (top + (bottom - top) * fy) as f32;
            data.push(v.clamp(lo, hi));
        }
    }
    AlphaMap::new(target_height, target_width, data)
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                i as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

pub const ALPHAMAP_MAGIC: [u8; 4] = *b"ALPH";
pub const ALPHAMAP_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Serializes a mask into the `.alphamap` layout: `"ALPH"`, version, width,
/// height (all u32 little-endian), then row-major f32 LE values.
pub fn encode_alphamap(mask: &AlphaMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * mask.data.len());
    out.extend_from_slice(&ALPHAMAP_MAGIC);
    out.extend_from_slice(&ALPHAMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.width as u32).to_le_bytes());
    out.extend_from_slice(&(mask.height as u32).to_le_bytes());
    for v in &mask.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_alphamap(bytes: &[u8]) -> Result<AlphaMap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "alphamap header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if bytes[..4] != ALPHAMAP_MAGIC {
        return Err(Error::Format("missing ALPH magic bytes".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != ALPHAMAP_VERSION {
        return Err(Error::Format(format!(
            "unsupported alphamap version {version}"
        )));
    }
    let width = word(8) as usize;
    let height = word(12) as usize;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("alphamap dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "alphamap of {width}x{height} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    AlphaMap::new(height, width, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_alphamap(mask: &AlphaMap, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_alphamap(mask))
}

pub fn read_alphamap(path: impl AsRef<Path>) -> Result<AlphaMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_alphamap(&bytes)
}

/// Renders the mask as an 8-bit grayscale PNG, min-max stretched so the
/// smallest value is black and the largest white. A constant mask renders black.
pub fn save_alphamap_png(mask: &AlphaMap, path: impl AsRef<Path>) -> Result<()> {
    let (lo, hi) = (f64::from(mask.min()), f64::from(mask.max()));
    let range = hi - lo;
    let pixels: Vec<u8> = mask
        .data
        .iter()
        .map(|&v| {
            if range < 1e-12 {
                0
            } else {
                ((f64::from(v) - lo) / range * 255.0).round() as u8
            }
        })
        .collect();
    let img = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, pixels)
        .expect("buffer length matches dimensions");
    crate::imagecore::io::write_png(path.as_ref(), &image::DynamicImage::ImageLuma8(img))
}
