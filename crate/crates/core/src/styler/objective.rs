use std::collections::BTreeMap;

use crate::backend::{Backend, BackendDescriptor, FeatureMap, FeatureSet};
use crate::error::{Error, Result};
use crate::imagecore::{resample_alpha, AlphaMap, ImageTensor};
use crate::styler::{gram, style_loss, weighted_content_loss, GramMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// Start from the content image.
    Content,
    /// Start from uniform noise drawn with the configured seed.
    Random,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(Self::Content),
            "random" => Ok(Self::Random),
            other => Err(Error::Argument(format!("unknown init mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeight {
    pub layer: String,
    pub weight: f64,
}

impl LayerWeight {
    pub fn new(layer: impl Into<String>, weight: f64) -> Self {
        Self {
            layer: layer.into(),
            weight,
        }
    }
}

/// Optimization settings for [`crate::styler::stylize`].
#[derive(Clone, Debug, PartialEq)]
pub struct StyleConfig {
    pub content_layers: Vec<LayerWeight>,
    pub style_layers: Vec<LayerWeight>,
    /// Global multiplier on the style term.
    pub style_weight: f64,
    pub iterations: usize,
    /// Adam learning rate, in pixel units.
    pub step_size: f64,
    pub init_mode: InitMode,
    pub seed: u64,
}

impl StyleConfig {
    pub const DEFAULT_STEP_SIZE: f64 = 0.02;
    pub const DEFAULT_ITERATIONS: usize = 500;

    /// The backend's suggested layers; content layers weigh 1 each and the
    /// style layers share a total weight of 1.
    pub fn for_backend(descriptor: &BackendDescriptor) -> Self {
        let n = descriptor.style_layers.len() as f64;
        Self {
            content_layers: descriptor
                .content_layers
                .iter()
                .map(|l| LayerWeight::new(l.clone(), 1.0))
                .collect(),
            style_layers: descriptor
                .style_layers
                .iter()
                .map(|l| LayerWeight::new(l.clone(), 1.0 / n))
                .collect(),
            style_weight: 1.0,
            iterations: Self::DEFAULT_ITERATIONS,
            step_size: Self::DEFAULT_STEP_SIZE,
            init_mode: InitMode::Content,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.content_layers.is_empty() || self.style_layers.is_empty() {
            return Err(Error::Argument(
                "content and style layer lists must be non-empty".into(),
            ));
        }
        if self
            .content_layers
            .iter()
            .chain(&self.style_layers)
            .any(|l| !(l.weight > 0.0 && l.weight.is_finite()))
        {
            return Err(Error::Argument("layer weights must be positive".into()));
        }
        if !(self.style_weight > 0.0 && self.style_weight.is_finite()) {
            return Err(Error::Argument("style weight must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Argument("step size must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn style_weights(&self) -> BTreeMap<String, f64> {
        self.style_layers
            .iter()
            .map(|l| (l.layer.clone(), l.weight))
            .collect()
    }

    pub(crate) fn all_layers(&self) -> Vec<&str> {
        let mut layers: Vec<&str> = self
            .content_layers
            .iter()
            .chain(&self.style_layers)
            .map(|l| l.layer.as_str())
            .collect();
        layers.sort_unstable();
        layers.dedup();
        layers
    }
}

/// Content features of `x_c` and style Gram matrices of `x_s`.
#[derive(Clone, Debug)]
pub struct StyleTargets {
    pub content: FeatureSet,
    pub style: BTreeMap<String, GramMatrix>,
}

impl StyleTargets {
    pub fn compute(
        content_image: &ImageTensor,
        style_image: &ImageTensor,
        config: &StyleConfig,
        backend: &dyn Backend,
    ) -> Result<Self> {
        let content_layers: Vec<&str> = config
            .content_layers
            .iter()
            .map(|l| l.layer.as_str())
            .collect();
        let style_layers: Vec<&str> = config
            .style_layers
            .iter()
            .map(|l| l.layer.as_str())
            .collect();
        let content = backend.extract_features(content_image, &content_layers)?;
        let style = backend
            .extract_features(style_image, &style_layers)?
            .iter()
            .map(|(k, f)| (k.clone(), gram(f)))
            .collect();
        Ok(Self { content, style })
    }
}

/// The three objective values at one iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Sum over content layers of the alpha-weighted content loss.
    pub content: f64,
    /// Style loss before multiplication by the style weight.
    pub style: f64,
    /// `content + style_weight * style`
    pub total: f64,
}

/// Alpha maps resampled to each content layer's spatial size.
pub(crate) fn layer_alphas(
    alpha: &AlphaMap,
    targets: &StyleTargets,
    config: &StyleConfig,
) -> Result<BTreeMap<String, AlphaMap>> {
    config
        .content_layers
        .iter()
        .map(|l| {
            let target = targets.content.get(&l.layer).ok_or_else(|| {
                Error::Argument(format!("no content target for layer {}", l.layer))
            })?;
            Ok((
                l.layer.clone(),
                resample_alpha(alpha, target.height(), target.width())?,
            ))
        })
        .collect()
}

pub(crate) fn evaluate(
    x: &ImageTensor,
    targets: &StyleTargets,
    alphas: &BTreeMap<String, AlphaMap>,
    config: &StyleConfig,
    backend: &dyn Backend,
    with_gradient: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
    let (features, pullback) = backend.trace_features(x, &config.all_layers())?;

    let mut content = 0.0;
    let mut cotangents = FeatureSet::new();
    for l in &config.content_layers {
        let (f, p, a) = (
            &features[&l.layer],
            &targets.content[&l.layer],
            &alphas[&l.layer],
        );
        content += l.weight * weighted_content_loss(f, p, a)?;
        if with_gradient {
            let plane = f.height() * f.width();
            let cot = cotangents
                .entry(l.layer.clone())
                .or_insert_with(|| FeatureMap::zeros_like(f));
            for (i, d) in cot.data_mut().iter_mut().enumerate() {
                let diff = f.data()[i] - p.data()[i];
                *d += 2.0 * l.weight * f64::from(a.data()[i % plane]) * diff;
            }
        }
    }

    let style_features: FeatureSet = config
        .style_layers
        .iter()
        .map(|l| (l.layer.clone(), features[&l.layer].clone()))
        .collect();
    let style = style_loss(&style_features, &targets.style, &config.style_weights())?;
    if with_gradient {
        for l in &config.style_layers {
            let f = &features[&l.layer];
            let g = gram(f);
            let target = &targets.style[&l.layer];
            let (c, h, w) = f.shape();
            let n = h * w;
            let scale = config.style_weight * l.weight * 4.0 / (c * n) as f64;
            // d/dA sum (G - T)^2 = 4 (G - T) A / (C H W) for symmetric G - T
            let rows: Vec<&[f64]> = f.data().chunks_exact(n).collect();
            let cot = cotangents
                .entry(l.layer.clone())
                .or_insert_with(|| FeatureMap::zeros_like(f));
            let out = cot.data_mut();
            for a in 0..c {
                for b in 0..c {
                    let coef = scale * (g.get(a, b) - target.get(a, b));
                    if coef == 0.0 {
                        continue;
                    }
                    for (o, v) in out[a * n..(a + 1) * n].iter_mut().zip(rows[b]) {
                        *o += coef * v;
                    }
                }
            }
        }
    }

    let breakdown = LossBreakdown {
        content,
        style,
        total: content + config.style_weight * style,
    };
    let gradient = if with_gradient {
        Some(pullback.pullback(&cotangents)?)
    } else {
        None
    };
    Ok((breakdown, gradient))
}

/// Objective at `x`: alpha-weighted content loss on every content layer
/// (alpha resampled to the layer's resolution) plus `style_weight` times the
/// Gram style loss.
pub fn total_loss(
    x: &ImageTensor,
    targets: &StyleTargets,
    alpha: &AlphaMap,
    config: &StyleConfig,
    backend: &dyn Backend,
) -> Result<LossBreakdown> {
    check_alpha(x, alpha)?;
    let alphas = layer_alphas(alpha, targets, config)?;
    Ok(evaluate(x, targets, &alphas, config, backend, false)?.0)
}

/// [`total_loss`] together with its gradient with respect to the pixels of
/// `x`, laid out like [`ImageTensor::data`].
pub fn loss_and_gradient(
    x: &ImageTensor,
    targets: &StyleTargets,
    alpha: &AlphaMap,
    config: &StyleConfig,
    backend: &dyn Backend,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_alpha(x, alpha)?;
    let alphas = layer_alphas(alpha, targets, config)?;
    let (loss, grad) = evaluate(x, targets, &alphas, config, backend, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

pub(crate) fn check_alpha(x: &ImageTensor, alpha: &AlphaMap) -> Result<()> {
    if alpha.dims() != x.dims() {
        return Err(Error::Argument(format!(
            "alpha map is {}x{} but image is {}x{}",
            alpha.height(),
            alpha.width(),
            x.height(),
            x.width()
        )));
    }
    Ok(())
}
