use crate::error::{Error, Result};

/// An RGB image with channel values in `[0, 1]`.
///
/// Pixels are stored row-major with the three channels interleaved, so the
/// value of channel `c` at row `y`, column `x` lives at `(y * width + x) * 3 + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    /// Builds an image from interleaved RGB data, rejecting values outside `[0, 1]`.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::Argument(format!(
                "expected {} values for a {height}x{width} RGB image, got {}",
                height * width * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!(
                "pixel value {bad} is outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Like [`ImageTensor::new`] but clamps every value into `[0, 1]` (NaN maps to 0).
    pub fn from_vec_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, color: [f64; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| color)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
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

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * Self::CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub(crate) fn set_pixel(&mut self, y: usize, x: usize, color: [f64; 3]) {
        let i = (y * self.width + x) * Self::CHANNELS;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    /// Per-channel mean over all pixels.
    pub fn mean_color(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                sum[c] += px[c];
            }
        }
        let n = self.pixel_count() as f64;
        sum.map(|s| s / n)
    }

    /// Mean of the three channels at every pixel, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|px| (px[0] + px[1] + px[2]) / 3.0)
            .collect()
    }

    /// Resizes with a triangle (bilinear) filter. Values stay inside `[0, 1]`.
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "resize target must be positive, got {height}x{width}"
            )));
        }
        let buf = image::Rgb32FImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .expect("buffer length matches dimensions");
        let out = image::imageops::resize(
            &buf,
            width as u32,
            height as u32,
            image::imageops::FilterType::Triangle,
        );
        Self::from_vec_clamped(
            height,
            width,
            out.into_raw().into_iter().map(f64::from).collect(),
        )
    }

    /// Largest absolute per-channel difference between two equally sized images.
    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dimensions differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
