//! Image metrics and run-level evaluation reports.

pub mod image;
pub mod report;

pub use image::{lpips, mse, psnr, ssim, subject_consistency, FeatureExtractor, IdentityExtractor, PyramidExtractor};
pub use report::{evaluate_run, MetricReport, MetricSummary};
