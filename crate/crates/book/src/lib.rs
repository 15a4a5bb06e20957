//! Compiles and runs every code listing in the guide under `book/src` as a
//! doctest, so the book cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/images-and-masks.md")]
pub mod images_and_masks {}
#[doc = include_str!("../../../book/src/backends.md")]
pub mod backends {}
#[doc = include_str!("../../../book/src/occlusion-saliency.md")]
pub mod occlusion_saliency {}
#[doc = include_str!("../../../book/src/superpixels.md")]
pub mod superpixels {}
#[doc = include_str!("../../../book/src/weighted-objective.md")]
pub mod weighted_objective {}
#[doc = include_str!("../../../book/src/optimization.md")]
pub mod optimization {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
