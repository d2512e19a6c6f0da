use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::det::DetCurve;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::rng;

/// ASV error rates at its own equal-error threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsvOperatingPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_miss: f64,
    /// Fraction of spoof trials the ASV rejects.
    pub p_miss_spoof: f64,
}

/// Fix the ASV threshold at the target/non-target EER point and read off
/// all three error rates there.
pub fn asv_operating_point(tar: &[f64], non: &[f64], spoof: &[f64]) -> Result<AsvOperatingPoint> {
    if spoof.is_empty() {
        return Err(Error::EmptyClass("spoof"));
    }
    let curve = DetCurve::from_classes(tar, non).map_err(|e| match e {
        Error::EmptyClass("bonafide") => Error::EmptyClass("target"),
        Error::EmptyClass(_) => Error::EmptyClass("non-target"),
        other => other,
    })?;
    let (a, b) = curve.crossing();
    let gap = |i: usize| libm::fabs(curve.p_fa[i] - curve.p_miss[i]);
    let i = if gap(a) < gap(b) { a } else { b };
    let t = curve.thresholds[i];
    let below = |xs: &[f64]| xs.iter().filter(|&&s| s <= t).count() as f64 / xs.len() as f64;
    Ok(AsvOperatingPoint {
        threshold: t,
        p_fa: 1.0 - below(non),
        p_miss: below(tar),
        p_miss_spoof: below(spoof),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsvScores {
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
    pub spoof: Vec<f64>,
}

/// Gaussian stand-in for a speaker verifier: target ~ N(2,1),
/// non-target ~ N(0,1), spoof ~ N(1,1).
pub fn synthetic_asv_scores(
    n_target: usize,
    n_nontarget: usize,
    n_spoof: usize,
    seed: u64,
) -> AsvScores {
    let draw = |mean: f64, n: usize, tag: &str| {
        let mut r = rng::stream(seed, tag);
        let d = Normal::new(mean, 1.0).expect("unit variance");
        (0..n).map(|_| d.sample(&mut r)).collect::<Vec<f64>>()
    };
    AsvScores {
        target: draw(2.0, n_target, "asv-target"),
        nontarget: draw(0.0, n_nontarget, "asv-nontarget"),
        spoof: draw(1.0, n_spoof, "asv-spoof"),
    }
}

/// Costs, priors and ASV operating point of the tandem cost function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfParams {
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    pub pi_tar: f64,
    pub pi_non: f64,
    pub pi_spoof: f64,
    pub asv: AsvOperatingPoint,
}

impl TdcfParams {
    /// ASVspoof 2019 costs and priors.
    pub fn asvspoof2019(asv: AsvOperatingPoint) -> Self {
        Self {
            c_miss_asv: 1.0,
            c_fa_asv: 10.0,
            c_miss_cm: 1.0,
            c_fa_cm: 10.0,
            pi_tar: 0.9405,
            pi_non: 0.0095,
            pi_spoof: 0.05,
            asv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let priors = [self.pi_tar, self.pi_non, self.pi_spoof];
        if priors.iter().any(|p| *p < 0.0) || libm::fabs(priors.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(Error::InvalidArgument(
                "t-DCF priors must be >= 0 and sum to 1".into(),
            ));
        }
        if [self.c_miss_asv, self.c_fa_asv, self.c_miss_cm, self.c_fa_cm]
            .iter()
            .any(|c| !(*c > 0.0))
        {
            return Err(Error::InvalidArgument("t-DCF costs must be > 0".into()));
        }
        let a = &self.asv;
        if [a.p_fa, a.p_miss, a.p_miss_spoof]
            .iter()
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return Err(Error::InvalidArgument("ASV rates must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Weights of CM miss and CM false alarm.
    pub fn coefficients(&self) -> (f64, f64) {
        let a = &self.asv;
        let c1 = self.pi_tar * (self.c_miss_cm - self.c_miss_asv * a.p_miss)
            - self.pi_non * self.c_fa_asv * a.p_fa;
        let c2 = self.c_fa_cm * self.pi_spoof * (1.0 - a.p_miss_spoof);
        (c1, c2)
    }
}

/// Minimum over the DET sweep of the t-DCF normalised by `min(C1, C2)`.
pub fn min_tdcf(scores: &[f64], labels: &[Label], params: &TdcfParams) -> Result<f64> {
    params.validate()?;
    let (c1, c2) = params.coefficients();
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::IncompatibleOperatingPoint { c1, c2 });
    }
    let curve = super::compute_det(scores, labels)?;
    let best = (0..curve.len())
        .map(|i| c1 * curve.p_miss[i] + c2 * curve.p_fa[i])
        .fold(f64::INFINITY, libm::fmin);
    Ok(best / c1.min(c2))
}
