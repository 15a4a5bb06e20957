//! Central-object detection by occlusion.
//!
//! The image is split into regions (a patch grid, shifted grids, or SLIC
//! superpixels). Each region is filled with a uniform color and the change
//! in the classifier's output distribution is that region's importance.
//! Importance maps from several partitions are averaged, optionally snapped
//! to an external segmentation, and finally rescaled into alpha bounds.

mod combine;
mod config;
mod occlusion;
mod pipeline;
mod slic;

pub use combine::{average_masks, normalize_mask, scores_to_mask, segmentation_refine};
pub use config::{MaskMethod, MaskMethodConfig, SuperpixelParams};
pub use occlusion::{occlude, patch_partition, score_regions, RegionScore};
pub use pipeline::{generate_mask, generate_mask_with_report, MaskOutcome, PassReport};
pub use slic::{rgb_to_lab, slic_superpixels};
