use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMethod {
    /// One uniform grid at shift (0, 0).
    Patch,
    /// Several shifted grids, raw maps averaged pixelwise.
    PatchAveraged,
    /// One SLIC pass per parameter pair, raw maps averaged.
    Superpixel,
    /// Superpixel average snapped to an external segmentation.
    Segmentation,
}

impl std::str::FromStr for MaskMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch" => Ok(Self::Patch),
            "patch-avg" | "patch-averaged" => Ok(Self::PatchAveraged),
            "superpixel" => Ok(Self::Superpixel),
            "segmentation" => Ok(Self::Segmentation),
            other => Err(Error::Argument(format!("unknown mask method {other:?}"))),
        }
    }
}

/// One SLIC run: requested segment count and compactness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperpixelParams {
    pub segment_count: usize,
    pub compactness: f64,
}

/// How an importance mask is built and scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMethodConfig {
    pub method: MaskMethod,
    /// `None` picks an eighth of the shorter image side.
    pub patch_size: Option<usize>,
    /// `(dy, dx)` grid offsets for [`MaskMethod::PatchAveraged`]. `None`
    /// uses `(0,0), (s/2,0), (0,s/2), (s/2,s/2)` for patch size `s`.
    pub grid_shifts: Option<Vec<(usize, usize)>>,
    pub superpixel_params: Vec<SuperpixelParams>,
    /// `None` fills occluded regions with the image's mean color.
    pub fill_color: Option<[f64; 3]>,
    pub alpha_min: f32,
    pub alpha_max: f32,
}

impl Default for MaskMethodConfig {
    fn default() -> Self {
        Self {
            method: MaskMethod::PatchAveraged,
            patch_size: None,
            grid_shifts: None,
            superpixel_params: vec![
                SuperpixelParams {
                    segment_count: 50,
                    compactness: 10.0,
                },
                SuperpixelParams {
                    segment_count: 100,
                    compactness: 10.0,
                },
                SuperpixelParams {
                    segment_count: 200,
                    compactness: 20.0,
                },
            ],
            fill_color: None,
            alpha_min: 1.0,
            alpha_max: 10.0,
        }
    }
}

impl MaskMethodConfig {
    pub fn new(method: MaskMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn effective_patch_size(&self, height: usize, width: usize) -> usize {
        self.patch_size
            .unwrap_or_else(|| (height.min(width) / 8).max(1))
    }

    pub fn effective_shifts(&self, patch_size: usize) -> Vec<(usize, usize)> {
        match (&self.grid_shifts, self.method) {
            (Some(shifts), MaskMethod::PatchAveraged) => shifts.clone(),
            (None, MaskMethod::PatchAveraged) => {
                let h = patch_size / 2;
                let mut shifts = vec![(0, 0), (h, 0), (0, h), (h, h)];
                shifts.dedup();
                shifts
            }
            _ => vec![(0, 0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == Some(0) {
            return Err(Error::Argument("patch size must be at least 1".into()));
        }
        if !(self.alpha_min >= 0.0 && self.alpha_min.is_finite() && self.alpha_max.is_finite()) {
            return Err(Error::Argument(
                "alpha bounds must be finite and alpha_min >= 0".into(),
            ));
        }
        if self.alpha_max <= self.alpha_min {
            return Err(Error::Argument(format!(
                "alpha_max ({}) must exceed alpha_min ({})",
                self.alpha_max, self.alpha_min
            )));
        }
        if let Some(c) = self.fill_color {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Argument(
                    "fill color channels must lie in [0, 1]".into(),
                ));
            }
        }
        if matches!(self.grid_shifts.as_deref(), Some([])) {
            return Err(Error::Argument("grid shift list is empty".into()));
        }
        if matches!(
            self.method,
            MaskMethod::Superpixel | MaskMethod::Segmentation
        ) {
            if self.superpixel_params.is_empty() {
                return Err(Error::Argument("superpixel parameter list is empty".into()));
            }
            for p in &self.superpixel_params {
                if p.segment_count < 2 {
                    return Err(Error::Argument("segment count must be at least 2".into()));
                }
                if !(p.compactness > 0.0 && p.compactness.is_finite()) {
                    return Err(Error::Argument("compactness must be positive".into()));
                }
            }
        }
        Ok(())
    }
}
