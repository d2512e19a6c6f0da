use alloc::vec;

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Per-column standardisation to zero mean and unit (population) variance.
///
/// Columns with variance below [`VARIANCE_FLOOR`] are divided by the floor's
/// square root instead, so constant columns become all zeros.
pub fn cmvn(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let (t, d) = (m.frames(), m.dims());
    if t < 2 {
        return Err(Error::TooShort { needed: 2, got: t });
    }
    let mut mean = vec![0.0; d];
    for row in m.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= t as f64);
    let mut var = vec![0.0; d];
    for row in m.rows() {
        for j in 0..d {
            let c = row[j] - mean[j];
            var[j] += c * c;
        }
    }
    let mut floored = 0;
    let scale: alloc::vec::Vec<f64> = var
        .iter()
        .map(|v| {
            let v = v / t as f64;
            if v < VARIANCE_FLOOR {
                floored += 1;
                1.0 / libm::sqrt(VARIANCE_FLOOR)
            } else {
                1.0 / libm::sqrt(v)
            }
        })
        .collect();
    if floored > 0 {
        log::warn!("cmvn: {floored} of {d} columns below the variance floor");
    }
    let mut values = m.values().to_vec();
    for row in values.chunks_exact_mut(d) {
        for j in 0..d {
            row[j] = (row[j] - mean[j]) * scale[j];
        }
    }
    FeatureMatrix::new(m.kind(), t, d, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use alloc::vec::Vec;

    #[test]
    fn two_rows_hand_case() {
        let m = FeatureMatrix::new(FeatureKind::Cqcc, 2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(cmvn(&m).unwrap().values(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let m = FeatureMatrix::new(FeatureKind::Cqcc, 3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0])
            .unwrap();
        let out = cmvn(&m).unwrap();
        assert!((0..3).all(|t| out.get(t, 0) == 0.0));
    }

    #[test]
    fn idempotent() {
        let vals: Vec<f64> = (0..40)
            .map(|i| libm::sin(i as f64 * 0.7) * 3.0 + i as f64)
            .collect();
        let m = FeatureMatrix::new(FeatureKind::Cqcc, 20, 2, vals).unwrap();
        let a = cmvn(&m).unwrap();
        let b = cmvn(&a).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_frame_rejected() {
        let m = FeatureMatrix::new(FeatureKind::Cqcc, 1, 2, vec![1.0, 2.0]).unwrap();
        assert!(cmvn(&m).is_err());
    }
}
