use std::collections::BTreeMap;

use crate::backend::{FeatureMap, FeatureSet};
use crate::error::{Error, Result};
use crate::imagecore::AlphaMap;

fn same_shape(f: &FeatureMap, p: &FeatureMap) -> Result<()> {
    if f.shape() != p.shape() {
        return Err(Error::Argument(format!(
            "feature shapes differ: {:?} vs {:?}",
            f.shape(),
            p.shape()
        )));
    }
    Ok(())
}

/// `weight * sum (F - P)^2` over channels and positions.
pub fn content_loss(f: &FeatureMap, p: &FeatureMap, weight: f64) -> Result<f64> {
    same_shape(f, p)?;
    let sq: f64 = f
        .data()
        .iter()
        .zip(p.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(weight * sq)
}

/// `sum_{i,j} alpha_{i,j} * sum_c (F_{c,i,j} - P_{c,i,j})^2`: one weight per
/// spatial position, shared by all channels.
pub fn weighted_content_loss(f: &FeatureMap, p: &FeatureMap, alpha: &AlphaMap) -> Result<f64> {
    same_shape(f, p)?;
    if alpha.dims() != (f.height(), f.width()) {
        return Err(Error::Argument(format!(
            "alpha map is {:?} but features are {}x{}",
            alpha.dims(),
            f.height(),
            f.width()
        )));
    }
    let plane = f.height() * f.width();
    let mut per_position = vec![0.0f64; plane];
    for (fc, pc) in f
        .data()
        .chunks_exact(plane)
        .zip(p.data().chunks_exact(plane))
    {
        for (acc, (a, b)) in per_position.iter_mut().zip(fc.iter().zip(pc)) {
            *acc += (a - b) * (a - b);
        }
    }
    Ok(per_position
        .iter()
        .zip(alpha.data())
        .map(|(sq, &a)| f64::from(a) * sq)
        .sum())
}

/// Channel correlation matrix of a feature map, normalized by `C * H * W`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    layer: String,
    size: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn new(layer: impl Into<String>, size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::Argument(format!(
                "gram matrix of size {size} needs {} entries, got {}",
                size * size,
                data.len()
            )));
        }
        Ok(Self {
            layer: layer.into(),
            size,
            data,
        })
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.size + b]
    }
}

/// `G = A A^T / (C H W)` where `A` is the `C x (H W)` unrolling of `f`.
pub fn gram(f: &FeatureMap) -> GramMatrix {
    let (c, h, w) = f.shape();
    let n = h * w;
    let norm = (c * n) as f64;
    let rows: Vec<&[f64]> = f.data().chunks_exact(n).collect();
    let mut data = vec![0.0; c * c];
    for a in 0..c {
        for b in a..c {
            let dot: f64 = rows[a].iter().zip(rows[b]).map(|(x, y)| x * y).sum();
            data[a * c + b] = dot / norm;
            data[b * c + a] = dot / norm;
        }
    }
    GramMatrix {
        layer: f.layer().to_string(),
        size: c,
        data,
    }
}

/// `sum_l w_l * sum_{a,b} (gram(F_l) - G_l)^2`. Features, targets and
/// weights must name the same layers.
pub fn style_loss(
    features: &FeatureSet,
    targets: &BTreeMap<String, GramMatrix>,
    layer_weights: &BTreeMap<String, f64>,
) -> Result<f64> {
    if !targets.keys().eq(layer_weights.keys()) || !targets.keys().all(|k| features.contains_key(k))
    {
        return Err(Error::Argument(
            "style features, targets and weights must cover the same layers".into(),
        ));
    }
    let mut total = 0.0;
    for (layer, target) in targets {
        let g = gram(&features[layer]);
        if g.size != target.size {
            return Err(Error::Argument(format!(
                "layer {layer}: gram size {} vs target {}",
                g.size, target.size
            )));
        }
        let sq: f64 = g
            .data
            .iter()
            .zip(&target.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += layer_weights[layer] * sq;
    }
    Ok(total)
}
