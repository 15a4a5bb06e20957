//! Image, mask and partition types plus their file formats.
//!
//! Everything crossing a module boundary is in `[0, 1]` pixel space; any
//! network-specific normalization happens inside the backends.

mod alpha;
mod io;
mod partition;
mod tensor;

pub use alpha::{
    decode_alphamap, encode_alphamap, read_alphamap, resample_alpha, save_alphamap_png,
    write_alphamap, AlphaMap, ALPHAMAP_MAGIC, ALPHAMAP_VERSION,
};
pub use io::{load_image, load_label_map, save_image, to_rgb8_bytes, write_atomic};
pub(crate) use partition::neighbors4;
pub use partition::RegionPartition;
pub use tensor::ImageTensor;
