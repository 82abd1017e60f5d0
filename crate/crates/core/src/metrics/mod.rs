//! Full-reference image quality (PSNR, SSIM, FSIM) and detection metrics
//! (IoU, mAP, mean IoU).

mod detection;
mod fsim;
mod psnr;
mod report;
mod ssim;

pub use detection::{
    all_point_ap, by_image, evaluate_detections, iou, BoundingBox, ClassAp, Detection,
    DetectionSummary,
};
pub use fsim::{fsim, FSIM_T1, FSIM_T2};
pub use psnr::{mse, psnr};
pub use report::{format_db, Aggregate, PairScore, QualityReport};
pub use ssim::{gaussian_taps, ssim, ssim_constants, SSIM_SIGMA, SSIM_WINDOW};
