use alloc::vec::Vec;

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};

/// Truncate to the first `t` frames, or repeat the frames cyclically from
/// the start until there are `t` of them.
pub fn unify_length(m: &FeatureMatrix, t: usize) -> Result<FeatureMatrix> {
    let n = m.frames();
    if n == 0 || t == 0 {
        return Err(Error::TooShort {
            needed: 1,
            got: n.min(t),
        });
    }
    let d = m.dims();
    let mut values = Vec::with_capacity(t * d);
    for i in 0..t {
        values.extend_from_slice(m.row(i % n));
    }
    FeatureMatrix::new(m.kind(), t, d, values)
}
