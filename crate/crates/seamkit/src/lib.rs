//! Seam prediction toolkit for parallax-tolerant image stitching.
//!
//! Given two pre-warped images on a common canvas, every method here predicts
//! a pair of binary masks whose common boundary is the seam along which the
//! composite switches from one source image to the other. Four backends are
//! provided:
//!
//! - [`dp`]: dynamic-programming path search over a pixel-difference cost map
//!   (fast, low degree of freedom).
//! - [`gc`]: exact min-cut over a pixel-adjacency graph (slow, globally
//!   optimal for its energy).
//! - [`optim`]: direct per-pair gradient descent on a soft mask under the
//!   selection consistency loss in [`loss`].
//! - [`net`]: a small encoder-decoder network trained unsupervised with the
//!   same loss, predicting the soft mask in one forward pass.
//!
//! [`metrics`] scores a seam by ZNCC patch similarity across the two sources,
//! [`synth`] generates reproducible test pairs with controlled parallax, and
//! [`bench`] runs the full method-by-pair matrix with timing and CSV reports.

pub mod bench;
pub mod dp;
mod error;
pub mod gc;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod raster;
pub mod synth;
mod util;

pub use error::{Result, SeamError};
pub use loss::{LossBreakdown, LossSpace, LossWeights};
pub use mask::{CrackPoint, Mask, MaskPair, RegionPartition, SoftMaskPair, ValidMasks};
pub use raster::ImageF;
