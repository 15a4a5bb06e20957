//! Classifier backends: class probabilities for occlusion scoring and
//! intermediate feature maps (with pixel gradients) for the style losses.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;

mod conv;
mod toy;
mod vgg;

pub use toy::ToyBackend;
pub use vgg::{
    load_pretrained, weights_path_from_env, VggArchitecture, VggBackend, VGG19_WEIGHTS_FILE,
    WEIGHTS_DIR_ENV,
};

/// A probability vector over the backend's classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution {
    probabilities: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Argument("empty class distribution".into()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Argument(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Argument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probabilities })
    }

    /// Numerically stable softmax of raw logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Self::new(exps.into_iter().map(|e| e / z).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Euclidean distance between two distributions over the same classes.
    pub fn l2_distance(&self, other: &ClassDistribution) -> f64 {
        assert_eq!(self.len(), other.len(), "class counts differ");
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// The `k` most probable classes, highest first; ties broken by class index.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> =
            self.probabilities.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

/// Activations of one named layer, channel-major (`C x H x W`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    layer: String,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        layer: impl Into<String>,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let layer = layer.into();
        if channels * height * width != data.len() || data.is_empty() {
            return Err(Error::Argument(format!(
                "feature map {layer}: {channels}x{height}x{width} does not match {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "feature map {layer} has non-finite values"
            )));
        }
        Ok(Self {
            layer,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros_like(other: &FeatureMap) -> Self {
        Self {
            data: vec![0.0; other.data.len()],
            ..other.clone()
        }
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

pub type FeatureSet = BTreeMap<String, FeatureMap>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSizePolicy {
    /// Classification input is resampled to this size.
    Fixed {
        height: usize,
        width: usize,
    },
    Flexible,
}

/// What a backend offers and which layers the style engine should use.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendDescriptor {
    pub name: String,
    pub class_count: usize,
    pub class_names: Vec<String>,
    /// Every layer the backend can extract, in forward order.
    pub layers: Vec<String>,
    pub content_layers: Vec<String>,
    pub style_layers: Vec<String>,
    pub input_size_policy: InputSizePolicy,
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.content_layers.is_empty() || self.style_layers.is_empty() {
            return Err(Error::Config(format!(
                "backend {}: content and style layer lists must be non-empty",
                self.name
            )));
        }
        for l in self.content_layers.iter().chain(&self.style_layers) {
            if !self.layers.contains(l) {
                return Err(Error::Config(format!(
                    "backend {} has no layer named {l}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn class_name(&self, class: usize) -> Option<&str> {
        self.class_names.get(class).map(String::as_str)
    }

    pub(crate) fn check_layers(&self, layers: &[&str]) -> Result<()> {
        match layers.iter().find(|l| !self.layers.iter().any(|k| k == *l)) {
            Some(l) => Err(Error::Config(format!(
                "backend {} has no layer named {l}",
                self.name
            ))),
            None => Ok(()),
        }
    }
}

/// Vector-Jacobian product of a traced feature extraction.
pub trait Pullback {
    /// Given `dL/dF` for some of the traced layers (absent layers count as
    /// zero), returns `dL/dx` laid out like [`ImageTensor::data`].
    fn pullback(&self, cotangents: &FeatureSet) -> Result<Vec<f64>>;
}

/// A classification network usable for occlusion scoring and stylization.
///
/// Instances are read-only once built and may be shared across threads.
/// Batching in [`Backend::classify_batch`] is the only place the crate
/// parallelizes backend calls; results never depend on scheduling.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn classify(&self, image: &ImageTensor) -> Result<ClassDistribution>;

    fn classify_batch(&self, images: &[ImageTensor]) -> Result<Vec<ClassDistribution>> {
        let first = images
            .first()
            .ok_or_else(|| Error::Argument("classify_batch needs at least one image".into()))?;
        if images.iter().any(|im| im.dims() != first.dims()) {
            return Err(Error::Argument("batch images must share dimensions".into()));
        }
        images.par_iter().map(|im| self.classify(im)).collect()
    }

    /// Forward pass that also returns a pullback for pixel gradients.
    fn trace_features<'a>(
        &'a self,
        image: &ImageTensor,
        layers: &[&str],
    ) -> Result<(FeatureSet, Box<dyn Pullback + 'a>)>;

    fn extract_features(&self, image: &ImageTensor, layers: &[&str]) -> Result<FeatureSet> {
        Ok(self.trace_features(image, layers)?.0)
    }
}

pub(crate) fn check_cotangent(traced: &FeatureMap, cot: &FeatureMap) -> Result<()> {
    if traced.shape() != cot.shape() {
        return Err(Error::Argument(format!(
            "cotangent for {} has shape {:?}, expected {:?}",
            traced.layer(),
            cot.shape(),
            traced.shape()
        )));
    }
    Ok(())
}
