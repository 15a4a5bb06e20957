use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::imagecore::{AlphaMap, ImageTensor, RegionPartition};
use crate::saliency::{
    average_masks, normalize_mask, patch_partition, score_regions, scores_to_mask,
    segmentation_refine, slic_superpixels, MaskMethod, MaskMethodConfig, RegionScore,
};

/// Summary of one partition-and-score pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PassReport {
    pub description: String,
    pub region_count: usize,
    pub min_importance: f64,
    pub max_importance: f64,
    /// Region with the highest importance (lowest label on ties).
    pub top_region: u32,
}

/// Everything [`generate_mask_with_report`] produces.
#[derive(Clone, Debug)]
pub struct MaskOutcome {
    /// Final mask within `[alpha_min, alpha_max]`.
    pub mask: AlphaMap,
    /// The combined importance map before normalization.
    pub raw: AlphaMap,
    pub passes: Vec<PassReport>,
}

fn report(description: String, partition: &RegionPartition, scores: &[RegionScore]) -> PassReport {
    let top = scores
        .iter()
        .max_by(|a, b| {
            a.importance
                .total_cmp(&b.importance)
                .then(b.region_label.cmp(&a.region_label))
        })
        .expect("partitions have at least one region");
    PassReport {
        description,
        region_count: partition.region_count(),
        min_importance: scores
            .iter()
            .map(|s| s.importance)
            .fold(f64::INFINITY, f64::min),
        max_importance: top.importance,
        top_region: top.region_label,
    }
}

fn scored_pass(
    image: &ImageTensor,
    partition: &RegionPartition,
    fill: [f64; 3],
    backend: &dyn Backend,
    description: String,
    reports: &mut Vec<PassReport>,
) -> Result<AlphaMap> {
    let scores = score_regions(image, partition, fill, backend)?;
    reports.push(report(description, partition, &scores));
    scores_to_mask(partition, &scores)
}

/// Builds a normalized importance mask with the configured method.
pub fn generate_mask(
    image: &ImageTensor,
    config: &MaskMethodConfig,
    backend: &dyn Backend,
    segmentation: Option<&RegionPartition>,
) -> Result<AlphaMap> {
    Ok(generate_mask_with_report(image, config, backend, segmentation)?.mask)
}

pub fn generate_mask_with_report(
    image: &ImageTensor,
    config: &MaskMethodConfig,
    backend: &dyn Backend,
    segmentation: Option<&RegionPartition>,
) -> Result<MaskOutcome> {
    config.validate()?;
    match (config.method, segmentation) {
        (MaskMethod::Segmentation, None) => {
            return Err(Error::Argument(
                "segmentation method needs a segmentation map".into(),
            ))
        }
        (MaskMethod::Segmentation, Some(seg)) if seg.dims() != image.dims() => {
            return Err(Error::Argument(format!(
                "segmentation map is {:?} but image is {:?}",
                seg.dims(),
                image.dims()
            )))
        }
        (MaskMethod::Segmentation, Some(_)) => {}
        (_, Some(_)) => {
            return Err(Error::Argument(
                "a segmentation map is only used by the segmentation method".into(),
            ))
        }
        (_, None) => {}
    }

    let (h, w) = image.dims();
    let fill = config.fill_color.unwrap_or_else(|| image.mean_color());
    let mut passes = Vec::new();
    let mut raw_maps = Vec::new();
    match config.method {
        MaskMethod::Patch | MaskMethod::PatchAveraged => {
            let size = config.effective_patch_size(h, w);
            for shift in config.effective_shifts(size) {
                let partition = patch_partition(h, w, size, shift)?;
                let desc = format!("grid {size}px shift ({}, {})", shift.0, shift.1);
                raw_maps.push(scored_pass(
                    image,
                    &partition,
                    fill,
                    backend,
                    desc,
                    &mut passes,
                )?);
            }
        }
        MaskMethod::Superpixel | MaskMethod::Segmentation => {
            for p in &config.superpixel_params {
                let partition = slic_superpixels(image, p.segment_count, p.compactness)?;
                let desc = format!("slic n={} compactness={}", p.segment_count, p.compactness);
                raw_maps.push(scored_pass(
                    image,
                    &partition,
                    fill,
                    backend,
                    desc,
                    &mut passes,
                )?);
            }
        }
    }
    let mut raw = average_masks(&raw_maps)?;
    if let Some(seg) = segmentation {
        raw = segmentation_refine(&raw, seg)?;
    }
    let mask = normalize_mask(&raw, config.alpha_min, config.alpha_max)?;
    Ok(MaskOutcome { mask, raw, passes })
}
