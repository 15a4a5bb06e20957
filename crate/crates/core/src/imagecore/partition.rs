use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Assignment of every pixel to one of `region_count` regions, labels dense
/// in `[0, region_count)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionPartition {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    region_count: usize,
}

impl RegionPartition {
    pub fn new(height: usize, width: usize, labels: Vec<u32>, region_count: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "partition dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::Argument(format!(
                "expected {} labels for {height}x{width}, got {}",
                height * width,
                labels.len()
            )));
        }
        let mut seen = vec![false; region_count];
        for &l in &labels {
            let slot = seen
                .get_mut(l as usize)
                .ok_or_else(|| Error::Argument(format!("label {l} outside [0, {region_count})")))?;
            *slot = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Argument(format!("label {missing} has no pixels")));
        }
        Ok(Self {
            height,
            width,
            labels,
            region_count,
        })
    }

    /// Relabels arbitrary label values densely, preserving their ascending order.
    pub fn from_raw_labels(height: usize, width: usize, raw: &[u32]) -> Result<Self> {
        let mut dense = BTreeMap::new();
        for &r in raw {
            dense.entry(r).or_insert(0u32);
        }
        for (i, v) in dense.values_mut().enumerate() {
            *v = i as u32;
        }
        let labels = raw.iter().map(|r| dense[r]).collect();
        Self::new(height, width, labels, dense.len())
    }

    /// A partition with a single region covering the whole image.
    pub fn single(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height * width], 1)
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

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of each region, indexed by label.
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True when every region's pixels form one 4-connected component.
    pub fn is_four_connected(&self) -> bool {
        let mut visited = vec![false; self.labels.len()];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.labels.len() {
            if visited[start] {
                continue;
            }
            components += 1;
            let label = self.labels[start];
            visited[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (y, x) = (i / self.width, i % self.width);
                for j in neighbors4(y, x, self.height, self.width) {
                    if !visited[j] && self.labels[j] == label {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        components == self.region_count
    }
}

pub(crate) fn neighbors4(
    y: usize,
    x: usize,
    height: usize,
    width: usize,
) -> impl Iterator<Item = usize> {
    let up = (y > 0).then(|| (y - 1) * width + x);
    let down = (y + 1 < height).then(|| (y + 1) * width + x);
    let left = (x > 0).then(|| y * width + x - 1);
    let right = (x + 1 < width).then(|| y * width + x + 1);
    [up, down, left, right].into_iter().flatten()
}
