//! Evaluation: quality and rate metrics, GMRF sampling and precision
//! estimation.

pub mod gmrf;
pub mod metrics;

pub use gmrf::{
    compare_to_laplacian, dataset_precision_study, empirical_precision, sample_covariance, sample_gmrf,
    synthetic_patch, synthetic_precision_study, PrecisionEstimate, SimilarityReport,
};
pub use metrics::{bd_br, bpip, psnr, psnr_from_mse, PsnrYuv, RdPoint, PEAK_8BIT};
