use crate::error::{Error, Result};
use crate::imagecore::{AlphaMap, RegionPartition};
use crate::saliency::RegionScore;

/// Paints every pixel with its region's importance.
pub fn scores_to_mask(partition: &RegionPartition, scores: &[RegionScore]) -> Result<AlphaMap> {
    let mut by_label: Vec<Option<f64>> = vec![None; partition.region_count()];
    for s in scores {
        let slot = by_label.get_mut(s.region_label as usize).ok_or_else(|| {
            Error::Argument(format!("score for unknown region {}", s.region_label))
        })?;
        if slot.replace(s.importance).is_some() {
            return Err(Error::Argument(format!(
                "region {} scored twice",
                s.region_label
            )));
        }
    }
    let values = by_label
        .iter()
        .enumerate()
        .map(|(l, v)| v.ok_or_else(|| Error::Argument(format!("region {l} has no score"))))
        .collect::<Result<Vec<f64>>>()?;
    let data = partition
        .labels()
        .iter()
        .map(|&l| values[l as usize] as f32)
        .collect();
    AlphaMap::new(partition.height(), partition.width(), data)
}

/// Pixelwise arithmetic mean. Values are summed in sorted order per pixel,
/// so the result does not depend on the order of `masks`.
pub fn average_masks(masks: &[AlphaMap]) -> Result<AlphaMap> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Argument("cannot average an empty list of masks".into()))?;
    if masks.iter().any(|m| m.dims() != first.dims()) {
        return Err(Error::Argument("masks to average differ in size".into()));
    }
    let n = masks.len() as f64;
    let mut column = vec![0.0f32; masks.len()];
    let data = (0..first.data().len())
        .map(|i| {
            for (c, m) in column.iter_mut().zip(masks) {
                *c = m.data()[i];
            }
            column.sort_by(f32::total_cmp);
            (column.iter().map(|&v| f64::from(v)).sum::<f64>() / n) as f32
        })
        .collect();
    AlphaMap::new(first.height(), first.width(), data)
}

/// Linear min-max rescale into `[alpha_min, alpha_max]`. A map whose range
/// is below `1e-9` becomes the constant midpoint of the bounds.
pub fn normalize_mask(raw: &AlphaMap, alpha_min: f32, alpha_max: f32) -> Result<AlphaMap> {
    let ordered = alpha_max.partial_cmp(&alpha_min) == Some(std::cmp::Ordering::Greater);
    if !ordered || alpha_min < 0.0 || !alpha_max.is_finite() {
        return Err(Error::Argument(format!(
            "invalid alpha bounds [{alpha_min}, {alpha_max}]"
        )));
    }
    let (lo, hi) = (f64::from(raw.min()), f64::from(raw.max()));
    let (a, b) = (f64::from(alpha_min), f64::from(alpha_max));
    if hi - lo < 1e-9 {
        let mid = ((a + b) / 2.0) as f32;
        return AlphaMap::constant(raw.height(), raw.width(), mid);
    }
    let data = raw
        .data()
        .iter()
        .map(|&v| {
            let t = (f64::from(v) - lo) / (hi - lo);
            ((a * (1.0 - t) + b * t) as f32).clamp(alpha_min, alpha_max)
        })
        .collect();
    AlphaMap::new(raw.height(), raw.width(), data)
}

/// Replaces each segment's values by their mean, snapping the map to the
/// segmentation's boundaries.
pub fn segmentation_refine(raw: &AlphaMap, segmentation: &RegionPartition) -> Result<AlphaMap> {
    if raw.dims() != segmentation.dims() {
        return Err(Error::Argument(format!(
            "mask is {:?} but segmentation is {:?}",
            raw.dims(),
            segmentation.dims()
        )));
    }
    let mut sums = vec![0.0f64; segmentation.region_count()];
    for (&l, &v) in segmentation.labels().iter().zip(raw.data()) {
        sums[l as usize] += f64::from(v);
    }
    let means: Vec<f32> = sums
        .iter()
        .zip(segmentation.region_sizes())
        .map(|(s, n)| (s / n as f64) as f32)
        .collect();
    let data = segmentation
        .labels()
        .iter()
        .map(|&l| means[l as usize])
        .collect();
    AlphaMap::new(raw.height(), raw.width(), data)
}
