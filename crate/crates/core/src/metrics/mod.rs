//! Training objective and the pansharpening quality metrics.

pub mod loss;
pub mod quality;

pub use loss::{loss_frequency, loss_spatial, loss_total, record_loss};
pub use quality::{d_lambda, d_s, ergas, metrics_csv, psnr, q2n, qnr, sam, ssim, MetricReport};
