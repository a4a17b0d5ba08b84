//! Catheter and guidewire segmentation for X-ray fluoroscopy.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! 1. [`imagecore`]: pixel grids, percentile normalization, ground-truth masks.
//! 2. [`nn`]: a small reverse-mode tensor core with the residual encoder-decoder,
//!    the soft Dice loss and momentum SGD.
//! 3. [`augment`]: on-the-fly geometric and intensity augmentation.
//! 4. [`centerline`]: thresholding, Zhang-Suen thinning, branch linking and spline
//!    smoothing of the network output into a single centerline with a tip.
//! 5. [`metrics`]: tip and centerline distances, per-sequence tip precision.
//! 6. [`synthgen`]: synthetic fluoroscopy sequences with exact ground truth.
//! 7. [`cli`]: the `gen-data`, `train`, `extract` and `evaluate` commands.

pub mod error;
pub mod fsutil;
pub mod augment;
pub mod centerline;
pub mod imagecore;
pub mod metrics;
pub mod nn;
pub mod synthgen;
pub mod cli;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ground-truth.md")]
    mod ground_truth {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/centerlines.md")]
    mod centerlines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
