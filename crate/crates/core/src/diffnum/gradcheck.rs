//! Central finite-difference gradient checking in f64.

use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::rng::Rng;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    let scale = libm::fmax(libm::fmax(libm::fabs(analytic), libm::fabs(numeric)), FLOOR);
    libm::fabs(analytic - numeric) / scale
}

/// Up to `k` distinct coordinates of `0..n`, sorted; all of them when `n <= k`.
pub fn sample_coords(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut idx = sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Central-difference check of `analytic` (the claimed gradient of `f` at
/// `point`) on the given coordinates. Returns the maximum relative error.
pub fn grad_check_coords<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    coords: &[usize],
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len());
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        worst = libm::fmax(worst, relative_error(analytic[i], numeric));
    }
    worst
}

/// [`grad_check_coords`] over a random subset of at least 100 coordinates
/// (all of them for smaller problems).
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64], h: f64, rng: &mut Rng) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let coords = sample_coords(point.len(), 100, rng);
    grad_check_coords(f, point, analytic, h, &coords)
}
