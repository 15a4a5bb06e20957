//! Pixel-space style transfer with a spatially weighted content term.
//!
//! The objective is
//!
//! ```text
//! L(x) = sum_l w_l sum_{i,j} alpha_{i,j} sum_c (F_l(x) - F_l(x_c))^2_{c,i,j}
//!      + style_weight * sum_l v_l || gram(F_l(x)) - gram(F_l(x_s)) ||^2
//! ```
//!
//! where `alpha` is defined at image resolution and bilinearly resampled to
//! every content layer. A constant `alpha` reduces to the classic scalar
//! content weight.

mod loss;
mod objective;
mod optimize;

pub use loss::{content_loss, gram, style_loss, weighted_content_loss, GramMatrix};
pub use objective::{
    loss_and_gradient, total_loss, InitMode, LayerWeight, LossBreakdown, StyleConfig, StyleTargets,
};
pub use optimize::{
    initial_image, stylize, stylize_with_observer, trace_to_csv, write_trace_csv, LossRecord,
    StylizeOutput, TRACE_HEADER,
};
