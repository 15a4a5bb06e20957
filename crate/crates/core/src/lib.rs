//! Neural style transfer whose strength varies across the image.
//!
//! A classifier looks at the content image while regions of it are blanked
//! out; regions whose removal changes the prediction most are the scene's
//! central objects. Their importance becomes a per-pixel weight on the
//! content loss, so those objects keep their detail while the rest of the
//! image takes on the style.
//!
//! * [`imagecore`]: images, alpha maps, region partitions and file formats
//! * [`backend`]: classifier/feature-extractor interface, a VGG-19
//!   implementation and a tiny hand-checkable toy network
//! * [`saliency`]: occlusion scoring over patch grids or superpixels
//! * [`styler`]: the weighted objective and its optimizer
//!
//! ```
//! use stylemask::backend::ToyBackend;
//! use stylemask::imagecore::ImageTensor;
//! use stylemask::saliency::{generate_mask, MaskMethod, MaskMethodConfig};
//!
//! let image = ImageTensor::from_fn(32, 32, |y, x| {
//!     if y < 16 && x < 16 { [1.0; 3] } else { [0.2; 3] }
//! })?;
//! let mut config = MaskMethodConfig::new(MaskMethod::Patch);
//! config.patch_size = Some(16);
//! config.fill_color = Some([0.0; 3]);
//! let mask = generate_mask(&image, &config, &ToyBackend::new(), None)?;
//! assert_eq!(mask.get(0, 0), config.alpha_max);
//! # Ok::<(), stylemask::Error>(())
//! ```

#![allow(clippy::needless_range_loop)]

pub mod backend;
mod error;
pub mod imagecore;
pub mod saliency;
pub mod styler;

pub use error::{Error, Result};
