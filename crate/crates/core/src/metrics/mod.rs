//! Image-quality metrics, the combined denoising objective, and rank-one
//! identification.

pub mod basic;
pub mod loss;
pub mod rank;
pub mod report;
pub mod ssim;

pub use basic::{l1, psnr, rmse};
pub use loss::{l1_var, total_denoise_loss, LossWeights, PerceptualExtractor};
pub use rank::{best_match, cosine, rank_one};
pub use report::{write_report, SampleMetrics};
pub use ssim::{ssim, ssim_var};
