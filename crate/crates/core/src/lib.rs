//! Longitudinal image prediction diagnostics.
//!
//! `longlens` bundles the pieces needed to assess a longitudinal imaging
//! dataset before (and after) fitting a predictive model:
//!
//! - [`raster`]: grayscale images, validity masks, file formats and the
//!   pixel primitives (morphology, components, hulls, warping).
//! - [`metrics`]: masked MAE / PSNR / SSIM and the change-map SSIM.
//! - [`atrophy`]: adaptive-threshold lesion segmentation, Dice, HD95 and the
//!   segmentation-parameter sensitivity sweep.
//! - [`diagnostics`]: task-entropy characterization and the posterior
//!   concentration (bias-variance) analysis.
//! - [`temporal`]: reference predictors and the time-delta embedding.
//! - [`registration`]: keypoint-driven registration and harmonization.
//! - [`stats`]: Wilcoxon signed-rank, Pearson correlation, summaries.
//! - [`cli`]: manifests, the phantom generator and command drivers.

pub mod atrophy;
pub mod cli;
pub mod diagnostics;
mod error;
pub mod geometry;
pub mod metrics;
pub mod raster;
pub mod registration;
pub mod stats;
pub mod temporal;

pub use error::{Error, Result};
pub use geometry::Projective;
pub use raster::{GrayImage, Rect, Scale, StructuringElement, ValidityMask};

/// Version string embedded in every JSON report.
pub const TOOL_VERSION: &str = concat!("longlens ", env!("CARGO_PKG_VERSION"));
