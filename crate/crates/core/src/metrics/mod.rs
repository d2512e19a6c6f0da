//! Detection metrics: DET sweep, EER, ASV operating point and min t-DCF.

mod det;
mod tdcf;

pub use det::{compute_det, eer, DetCurve};
pub use tdcf::{
    asv_operating_point, min_tdcf, synthetic_asv_scores, AsvOperatingPoint, AsvScores, TdcfParams,
};
