//! Gaussian kernel algebra and special functions.

mod cov;
pub mod estimates;
mod gauss;
mod special;

pub use cov::CovMatrix;
pub use gauss::{gauss_eval, hermite1, hermite2, GaussEval};
pub use special::mittag_leffler;
