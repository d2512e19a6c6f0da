use alloc::vec::Vec;

use crate::corpus::Label;
use crate::error::{shape_err, Error, Result};

/// Empirical (false alarm, miss) sweep. A trial is accepted as bonafide when
/// its score is strictly greater than the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    /// Increasing: `-inf`, midpoints between distinct scores, `+inf`.
    pub thresholds: Vec<f64>,
    /// Fraction of spoof trials accepted.
    pub p_fa: Vec<f64>,
    /// Fraction of bonafide trials rejected.
    pub p_miss: Vec<f64>,
}

impl DetCurve {
    pub fn from_classes(bonafide: &[f64], spoof: &[f64]) -> Result<Self> {
        if bonafide.is_empty() {
            return Err(Error::EmptyClass("bonafide"));
        }
        if spoof.is_empty() {
            return Err(Error::EmptyClass("spoof"));
        }
        if bonafide.iter().chain(spoof).any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        let mut all: Vec<(f64, bool)> = bonafide
            .iter()
            .map(|&s| (s, true))
            .chain(spoof.iter().map(|&s| (s, false)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nb, ns) = (bonafide.len() as f64, spoof.len() as f64);
        let mut thresholds = Vec::new();
        let mut p_fa = Vec::new();
        let mut p_miss = Vec::new();
        let (mut bona_below, mut spoof_below) = (0usize, 0usize);
        thresholds.push(f64::NEG_INFINITY);
        p_fa.push(1.0);
        p_miss.push(0.0);
        let mut i = 0;
        while i < all.len() {
            let v = all[i].0;
            while i < all.len() && all[i].0 == v {
                if all[i].1 {
                    bona_below += 1;
                } else {
                    spoof_below += 1;
                }
                i += 1;
            }
            thresholds.push(if i < all.len() {
                0.5 * (v + all[i].0)
            } else {
                f64::INFINITY
            });
            p_fa.push((ns - spoof_below as f64) / ns);
            p_miss.push(bona_below as f64 / nb);
        }
        Ok(Self {
            thresholds,
            p_fa,
            p_miss,
        })
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Index of the first point where `p_fa <= p_miss`, and the one before it.
    pub(crate) fn crossing(&self) -> (usize, usize) {
        let i = (0..self.len())
            .find(|&i| self.p_fa[i] - self.p_miss[i] <= 0.0)
            .unwrap_or(self.len() - 1);
        (i.saturating_sub(1), i)
    }
}

/// Split `scores` by `labels` and sweep.
pub fn compute_det(scores: &[f64], labels: &[Label]) -> Result<DetCurve> {
    if scores.len() != labels.len() {
        return Err(shape_err("compute_det", scores.len(), labels.len()));
    }
    let pick = |l| {
        scores
            .iter()
            .zip(labels)
            .filter(|(_, &x)| x == l)
            .map(|(s, _)| *s)
            .collect::<Vec<_>>()
    };
    DetCurve::from_classes(&pick(Label::Bonafide), &pick(Label::Spoof))
}

/// Equal error rate, linearly interpolated where `p_fa - p_miss` changes sign.
pub fn eer(curve: &DetCurve) -> f64 {
    let (a, b) = curve.crossing();
    let da = curve.p_fa[a] - curve.p_miss[a];
    let db = curve.p_fa[b] - curve.p_miss[b];
    if db == 0.0 || a == b {
        return curve.p_fa[b];
    }
    let lambda = da / (da - db);
    curve.p_fa[a] + lambda * (curve.p_fa[b] - curve.p_fa[a])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(b: &[f64], s: &[f64]) -> f64 {
        eer(&DetCurve::from_classes(b, s).unwrap())
    }

    #[test]
    fn hand_cases() {
        assert_eq!(e(&[2.0, 3.0], &[0.0, 1.0]), 0.0);
        assert_eq!(e(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert_eq!(e(&[1.0, 3.0], &[0.0, 2.0]), 0.5);
    }

    #[test]
    fn separable_contains_perfect_point() {
        let c = DetCurve::from_classes(&[2.0, 3.0], &[0.0, 1.0]).unwrap();
        assert!((0..c.len()).any(|i| c.p_fa[i] == 0.0 && c.p_miss[i] == 0.0));
    }

    #[test]
    fn constant_scores_give_trivial_points() {
        let c = DetCurve::from_classes(&[1.0; 4], &[1.0; 3]).unwrap();
        assert_eq!(c.thresholds, [f64::NEG_INFINITY, f64::INFINITY]);
        assert_eq!(c.p_fa, [1.0, 0.0]);
        assert_eq!(c.p_miss, [0.0, 1.0]);
        assert_eq!(eer(&c), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(
            compute_det(&[1.0], &[Label::Spoof]),
            Err(Error::EmptyClass("bonafide"))
        );
    }
}
