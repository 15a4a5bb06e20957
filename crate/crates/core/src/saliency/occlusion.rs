use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::imagecore::{ImageTensor, RegionPartition};

/// Occluded images classified per backend call.
const BATCH: usize = 16;

/// Importance of one region: L2 distance between the class distributions of
/// the intact and the occluded image. Always within `[0, sqrt(2)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionScore {
    pub region_label: u32,
    pub importance: f64,
}

/// Grid of `patch_size` cells whose lines sit at `dy + k * patch_size` and
/// `dx + k * patch_size`; edge cells are truncated. Labels run row-major
/// over the grid.
pub fn patch_partition(
    height: usize,
    width: usize,
    patch_size: usize,
    shift: (usize, usize),
) -> Result<RegionPartition> {
    if patch_size == 0 {
        return Err(Error::Argument("patch size must be at least 1".into()));
    }
    let (dy, dx) = shift;
    if dy >= patch_size || dx >= patch_size {
        return Err(Error::Argument(format!(
            "shift ({dy}, {dx}) must be smaller than patch size {patch_size}"
        )));
    }
    if patch_size > height && patch_size > width {
        return Err(Error::DegeneratePartition(format!(
            "patch size {patch_size} exceeds both image sides ({height}x{width})"
        )));
    }
    let cell = |i: usize, offset: usize| (i + (patch_size - offset) % patch_size) / patch_size;
    let cols = cell(width - 1, dx) + 1;
    let mut labels = Vec::with_capacity(height * width);
    for y in 0..height {
        let row = cell(y, dy);
        for x in 0..width {
            labels.push((row * cols + cell(x, dx)) as u32);
        }
    }
    let rows = cell(height - 1, dy) + 1;
    RegionPartition::new(height, width, labels, rows * cols)
}

/// Copy of `image` with every pixel of `region_label` set to `fill_color`.
pub fn occlude(
    image: &ImageTensor,
    partition: &RegionPartition,
    region_label: u32,
    fill_color: [f64; 3],
) -> Result<ImageTensor> {
    if partition.dims() != image.dims() {
        return Err(Error::Argument(
            "partition and image dimensions differ".into(),
        ));
    }
    if region_label as usize >= partition.region_count() {
        return Err(Error::Argument(format!(
            "region {region_label} not in partition of {} regions",
            partition.region_count()
        )));
    }
    if fill_color.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument(
            "fill color channels must lie in [0, 1]".into(),
        ));
    }
    let mut out = image.clone();
    let w = image.width();
    for (i, &l) in partition.labels().iter().enumerate() {
        if l == region_label {
            out.set_pixel(i / w, i % w, fill_color);
        }
    }
    Ok(out)
}

/// Scores every region of `partition` by occluding it with `fill_color`.
/// The reference distribution is computed once; occluded images are
/// classified in batches and each score depends only on its own region.
pub fn score_regions(
    image: &ImageTensor,
    partition: &RegionPartition,
    fill_color: [f64; 3],
    backend: &dyn Backend,
) -> Result<Vec<RegionScore>> {
    if partition.dims() != image.dims() {
        return Err(Error::Argument(
            "partition and image dimensions differ".into(),
        ));
    }
    let reference = backend.classify(image)?;
    let labels: Vec<u32> = (0..partition.region_count() as u32).collect();
    let mut scores = Vec::with_capacity(labels.len());
    for chunk in labels.chunks(BATCH) {
        let occluded = chunk
            .iter()
            .map(|&l| occlude(image, partition, l, fill_color))
            .collect::<Result<Vec<_>>>()?;
        let dists = backend.classify_batch(&occluded)?;
        for (&l, d) in chunk.iter().zip(&dists) {
            scores.push(RegionScore {
                region_label: l,
                importance: reference.l2_distance(d),
            });
        }
    }
    Ok(scores)
}
